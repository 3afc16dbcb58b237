#include "wave/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "wave/error.hpp"

namespace wave {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.data().data(), m.rows(), m.cols()); }
MutMap view(Matrix& m) { return MutMap(m.data().data(), m.rows(), m.cols()); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

void require_labels(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.rows()) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw InputError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(logits.cols()) + ")");
    }
  }
}

Matrix scaled_softmax(const Matrix& z, double temperature) {
  Matrix scaled = z;
  scaled *= 1.0 / temperature;
  return softmax_rows(scaled);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("matrix dimensions must be >= 1, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("matrix dimensions must be >= 1, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(values));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_str() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "sub");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: lhs " + a.shape_str() + " and rhs " + b.shape_str() + " do not conform");
  }
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: lhs " + a.shape_str() + " and rhs " + b.shape_str() +
                     " do not conform");
  }
  Matrix out(a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: lhs " + a.shape_str() + " and rhs " + b.shape_str() +
                     " do not conform");
  }
  Matrix out(a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

void add_row_inplace(Matrix& x, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row: bias " + bias.shape_str() + " does not match " + x.shape_str());
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) row[c] += bias(0, c);
  }
}

Matrix column_sums(const Matrix& x) {
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += row[c];
  }
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) worst = std::max(worst, std::abs(ad[i] - bd[i]));
  return worst;
}

void round_to_f32(Matrix& m) {
  for (double& v : m.data()) v = static_cast<double>(static_cast<float>(v));
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - m);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& upstream) {
  require_same_shape(y, upstream, "softmax_rows_backward");
  Matrix out(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto gr = upstream.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
    auto o = out.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) o[c] = yr[c] * (gr[c] - dot);
  }
  return out;
}

Matrix layer_norm(const Matrix& x, std::span<const double> gamma, std::span<const double> beta,
                  LayerNormCache* cache) {
  if (gamma.size() != x.cols() || beta.size() != x.cols()) {
    throw ShapeError("layer_norm: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                     std::to_string(beta.size()) + " for input " + x.shape_str());
  }
  const std::size_t n = x.cols();
  Matrix normalized(x.rows(), n);
  std::vector<double> rstd(x.rows());
  Matrix out(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    auto nr = normalized.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      nr[c] = (in[c] - mean) * rstd[r];
      o[c] = nr[c] * gamma[c] + beta[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->rstd = std::move(rstd);
  }
  return out;
}

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, std::span<const double> gamma,
                                   const Matrix& upstream) {
  if (!cache.valid()) throw StateError("layer_norm_backward: forward cache is empty");
  require_same_shape(cache.normalized, upstream, "layer_norm_backward");
  const std::size_t n = upstream.cols();
  if (gamma.size() != n) throw ShapeError("layer_norm_backward: gamma length mismatch");

  LayerNormGrads g{Matrix(upstream.rows(), n), Matrix(1, n), Matrix(1, n)};
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < upstream.rows(); ++r) {
    auto gr = upstream.row(r);
    auto xh = cache.normalized.row(r);
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      g.dgamma(0, c) += gr[c] * xh[c];
      g.dbeta(0, c) += gr[c];
      dxhat[c] = gr[c] * gamma[c];
      sum_d += dxhat[c];
      sum_dx += dxhat[c] * xh[c];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    auto dx = g.dx.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      dx[c] = cache.rstd[r] * (dxhat[c] - inv_n * sum_d - xh[c] * inv_n * sum_dx);
    }
  }
  return g;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix gelu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = gelu(v);
  return out;
}

Matrix gelu_backward(const Matrix& x, const Matrix& upstream) {
  require_same_shape(x, upstream, "gelu_backward");
  Matrix out = upstream;
  auto o = out.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= gelu_derivative(xd[i]);
  return out;
}

LinearGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& upstream) {
  if (upstream.rows() != a.rows() || upstream.cols() != b.cols()) {
    throw ShapeError("matmul_backward: upstream " + upstream.shape_str() + " vs product of " +
                     a.shape_str() + " and " + b.shape_str());
  }
  return {matmul_nt(upstream, b), matmul_tn(a, upstream)};
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  require_labels(logits, labels);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    total += (m + std::log(sum)) - z[static_cast<std::size_t>(labels[r])];
  }
  return total / static_cast<double>(logits.rows());
}

Matrix cross_entropy_backward(const Matrix& logits, std::span<const int> labels) {
  require_labels(logits, labels);
  Matrix grad = softmax_rows(logits);
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    grad(r, static_cast<std::size_t>(labels[r])) -= 1.0;
  }
  grad *= inv_b;
  return grad;
}

double kl_soft(const Matrix& teacher, const Matrix& student, double temperature) {
  require_same_shape(teacher, student, "kl_soft");
  if (!(temperature > 0.0)) throw InputError("kl_soft: temperature must be > 0");
  const Matrix pt = scaled_softmax(teacher, temperature);
  double total = 0.0;
  for (std::size_t r = 0; r < teacher.rows(); ++r) {
    // log-softmax of both rows, computed stably
    auto zt = teacher.row(r);
    auto zs = student.row(r);
    const double mt = *std::max_element(zt.begin(), zt.end()) / temperature;
    const double ms = *std::max_element(zs.begin(), zs.end()) / temperature;
    double st = 0.0;
    double ss = 0.0;
    for (std::size_t c = 0; c < zt.size(); ++c) {
      st += std::exp(zt[c] / temperature - mt);
      ss += std::exp(zs[c] / temperature - ms);
    }
    const double lse_t = mt + std::log(st);
    const double lse_s = ms + std::log(ss);
    double row = 0.0;
    for (std::size_t c = 0; c < zt.size(); ++c) {
      const double p = pt(r, c);
      if (p > 0.0) row += p * ((zt[c] / temperature - lse_t) - (zs[c] / temperature - lse_s));
    }
    total += row;
  }
  return total / static_cast<double>(teacher.rows());
}

Matrix kl_soft_backward(const Matrix& teacher, const Matrix& student, double temperature) {
  require_same_shape(teacher, student, "kl_soft_backward");
  if (!(temperature > 0.0)) throw InputError("kl_soft_backward: temperature must be > 0");
  Matrix grad = scaled_softmax(student, temperature);
  grad -= scaled_softmax(teacher, temperature);
  grad *= 1.0 / (temperature * static_cast<double>(teacher.rows()));
  return grad;
}

std::vector<int> argmax_rows(const Matrix& x) {
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace wave
