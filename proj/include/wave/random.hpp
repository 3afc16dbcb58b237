#pragma once

#include <cstdint>
#include <random>

#include "wave/tensor.hpp"

namespace wave {

using Rng = std::mt19937_64;

// Normal(0, std) resampled until |x| <= 2 std.
double truncated_normal(Rng& rng, double std);
void fill_truncated_normal(Matrix& m, Rng& rng, double std);
void fill_normal(Matrix& m, Rng& rng, double std);

// Derives an independent stream seed from a base seed and a tag, so that
// consumers (scalers, non-templated params, batch order) do not share draws.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace wave
