#pragma once

#include <span>
#include <vector>

#include "wave/tensor.hpp"

namespace wave {

// (a.rows*b.rows) x (a.cols*b.cols); block (j,k) is a(j,k) * b.
Matrix kron_product(const Matrix& a, const Matrix& b);

// W = sum_i templates[i] (x) scalers[i], accumulated in ascending i.
// All templates share one shape, all scalers share one shape.
Matrix compose_weight(std::span<const Matrix> templates, std::span<const Matrix> scalers);

// dL/dS_i given dL/dW. The upstream is split into a t1 x t2 grid of s1 x s2
// blocks G_jk and dS_i = sum_jk T_i(j,k) * G_jk. No Kronecker-sized
// intermediate is formed.
std::vector<Matrix> grad_scalers(const Matrix& upstream, std::span<const Matrix> templates);

// dL/dT_i given dL/dW: dT_i(j,k) = <S_i, G_jk> (Frobenius).
std::vector<Matrix> grad_templates(const Matrix& upstream, std::span<const Matrix> scalers);

using BlockGrid = std::vector<std::vector<Matrix>>;

// Splits w into a grid_rows x grid_cols grid of equal blocks.
BlockGrid block_partition(const Matrix& w, std::size_t grid_rows, std::size_t grid_cols);
Matrix block_assemble(const BlockGrid& grid);

}  // namespace wave
