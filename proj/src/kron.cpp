#include "wave/kron.hpp"

#include <string>

#include "wave/error.hpp"

namespace wave {

namespace {

void require_uniform(std::span<const Matrix> ms, const char* what) {
  if (ms.empty()) throw ShapeError(std::string(what) + " list is empty");
  for (const Matrix& m : ms) {
    if (m.empty()) throw ShapeError(std::string(what) + " list contains an empty matrix");
    if (!m.same_shape(ms.front())) {
      throw ShapeError(std::string(what) + " shapes differ: " + ms.front().shape_str() + " vs " +
                       m.shape_str());
    }
  }
}

void require_divisible(const Matrix& upstream, std::size_t r, std::size_t c, const char* op) {
  if (upstream.rows() % r != 0) {
    throw ShapeError(std::string(op) + ": upstream rows " + std::to_string(upstream.rows()) +
                     " not divisible by " + std::to_string(r));
  }
  if (upstream.cols() % c != 0) {
    throw ShapeError(std::string(op) + ": upstream cols " + std::to_string(upstream.cols()) +
                     " not divisible by " + std::to_string(c));
  }
}

}  // namespace

Matrix kron_product(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t j = 0; j < a.rows(); ++j) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(j, k);
      for (std::size_t p = 0; p < b.rows(); ++p) {
        auto dst = out.row(j * b.rows() + p).subspan(k * b.cols(), b.cols());
        auto src = b.row(p);
        for (std::size_t q = 0; q < b.cols(); ++q) dst[q] = s * src[q];
      }
    }
  }
  return out;
}

Matrix compose_weight(std::span<const Matrix> templates, std::span<const Matrix> scalers) {
  require_uniform(templates, "template");
  require_uniform(scalers, "scaler");
  if (templates.size() != scalers.size()) {
    throw ShapeError("compose_weight: " + std::to_string(templates.size()) + " templates but " +
                     std::to_string(scalers.size()) + " scalers");
  }
  const std::size_t t1 = templates.front().rows(), t2 = templates.front().cols();
  const std::size_t s1 = scalers.front().rows(), s2 = scalers.front().cols();
  Matrix w(t1 * s1, t2 * s2);
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const Matrix& t = templates[i];
    const Matrix& s = scalers[i];
    for (std::size_t j = 0; j < t1; ++j) {
      for (std::size_t k = 0; k < t2; ++k) {
        const double tv = t(j, k);
        for (std::size_t a = 0; a < s1; ++a) {
          auto dst = w.row(j * s1 + a).subspan(k * s2, s2);
          auto src = s.row(a);
          for (std::size_t b = 0; b < s2; ++b) dst[b] += tv * src[b];
        }
      }
    }
  }
  return w;
}

std::vector<Matrix> grad_scalers(const Matrix& upstream, std::span<const Matrix> templates) {
  require_uniform(templates, "template");
  const std::size_t t1 = templates.front().rows(), t2 = templates.front().cols();
  require_divisible(upstream, t1, t2, "grad_scalers");
  const std::size_t s1 = upstream.rows() / t1, s2 = upstream.cols() / t2;

  std::vector<Matrix> grads;
  grads.reserve(templates.size());
  for (const Matrix& t : templates) {
    Matrix ds(s1, s2);
    for (std::size_t j = 0; j < t1; ++j) {
      for (std::size_t k = 0; k < t2; ++k) {
        const double tv = t(j, k);
        for (std::size_t a = 0; a < s1; ++a) {
          auto src = upstream.row(j * s1 + a).subspan(k * s2, s2);
          auto dst = ds.row(a);
          for (std::size_t b = 0; b < s2; ++b) dst[b] += tv * src[b];
        }
      }
    }
    grads.push_back(std::move(ds));
  }
  return grads;
}

std::vector<Matrix> grad_templates(const Matrix& upstream, std::span<const Matrix> scalers) {
  require_uniform(scalers, "scaler");
  const std::size_t s1 = scalers.front().rows(), s2 = scalers.front().cols();
  require_divisible(upstream, s1, s2, "grad_templates");
  const std::size_t t1 = upstream.rows() / s1, t2 = upstream.cols() / s2;

  std::vector<Matrix> grads;
  grads.reserve(scalers.size());
  for (const Matrix& s : scalers) {
    Matrix dt(t1, t2);
    for (std::size_t j = 0; j < t1; ++j) {
      for (std::size_t k = 0; k < t2; ++k) {
        double acc = 0.0;
        for (std::size_t a = 0; a < s1; ++a) {
          auto src = upstream.row(j * s1 + a).subspan(k * s2, s2);
          auto sr = s.row(a);
          for (std::size_t b = 0; b < s2; ++b) acc += sr[b] * src[b];
        }
        dt(j, k) = acc;
      }
    }
    grads.push_back(std::move(dt));
  }
  return grads;
}

BlockGrid block_partition(const Matrix& w, std::size_t grid_rows, std::size_t grid_cols) {
  if (grid_rows == 0 || w.rows() % grid_rows != 0) {
    throw ShapeError("block_partition: rows " + std::to_string(w.rows()) + " not divisible by " +
                     std::to_string(grid_rows));
  }
  if (grid_cols == 0 || w.cols() % grid_cols != 0) {
    throw ShapeError("block_partition: cols " + std::to_string(w.cols()) + " not divisible by " +
                     std::to_string(grid_cols));
  }
  const std::size_t bh = w.rows() / grid_rows, bw = w.cols() / grid_cols;
  BlockGrid grid(grid_rows);
  for (std::size_t j = 0; j < grid_rows; ++j) {
    grid[j].reserve(grid_cols);
    for (std::size_t k = 0; k < grid_cols; ++k) {
      Matrix block(bh, bw);
      for (std::size_t a = 0; a < bh; ++a) {
        auto src = w.row(j * bh + a).subspan(k * bw, bw);
        std::copy(src.begin(), src.end(), block.row(a).begin());
      }
      grid[j].push_back(std::move(block));
    }
  }
  return grid;
}

Matrix block_assemble(const BlockGrid& grid) {
  if (grid.empty() || grid.front().empty()) throw ShapeError("block_assemble: empty grid");
  const Matrix& first = grid.front().front();
  const std::size_t bh = first.rows(), bw = first.cols();
  Matrix w(bh * grid.size(), bw * grid.front().size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (grid[j].size() != grid.front().size()) throw ShapeError("block_assemble: ragged grid");
    for (std::size_t k = 0; k < grid[j].size(); ++k) {
      const Matrix& block = grid[j][k];
      if (!block.same_shape(first)) throw ShapeError("block_assemble: heterogeneous blocks");
      for (std::size_t a = 0; a < bh; ++a) {
        auto src = block.row(a);
        std::copy(src.begin(), src.end(), w.row(j * bh + a).begin() + static_cast<long>(k * bw));
      }
    }
  }
  return w;
}

}  // namespace wave
