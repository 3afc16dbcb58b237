#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace wave {

// Dense row-major matrix of doubles. Every weight, activation and gradient in
// the library is one of these. A default-constructed Matrix is empty and acts
// as a placeholder; any shaped Matrix has rows >= 1 and cols >= 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  std::string shape_str() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Adds the 1 x cols row vector `bias` to every row of x.
void add_row_inplace(Matrix& x, const Matrix& bias);
// 1 x cols column sums.
Matrix column_sums(const Matrix& x);
Matrix hadamard(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);
// Rounds every entry to the nearest 32-bit float (storage precision).
void round_to_f32(Matrix& m);

Matrix softmax_rows(const Matrix& x);
// Vector-Jacobian product of softmax_rows given its output y.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& upstream);

inline constexpr double kLayerNormEps = 1e-6;

struct LayerNormCache {
  Matrix normalized;         // (x - mean) * rstd
  std::vector<double> rstd;  // per row 1/sqrt(var + eps)
  bool valid() const { return !normalized.empty(); }
};

struct LayerNormGrads {
  Matrix dx;
  Matrix dgamma;
  Matrix dbeta;
};

Matrix layer_norm(const Matrix& x, std::span<const double> gamma, std::span<const double> beta,
                  LayerNormCache* cache = nullptr);
LayerNormGrads layer_norm_backward(const LayerNormCache& cache, std::span<const double> gamma,
                                   const Matrix& upstream);

double gelu(double x);
double gelu_derivative(double x);
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& upstream);

struct LinearGrads {
  Matrix da;
  Matrix db;
};
// Gradients of a*b given d(a*b).
LinearGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& upstream);

// Mean over the batch of -log softmax(z)[y].
double cross_entropy(const Matrix& logits, std::span<const int> labels);
Matrix cross_entropy_backward(const Matrix& logits, std::span<const int> labels);

// Mean over the batch of KL(softmax(z_t / tau) || softmax(z_s / tau)).
double kl_soft(const Matrix& teacher, const Matrix& student, double temperature);
// Gradient with respect to the student logits only.
Matrix kl_soft_backward(const Matrix& teacher, const Matrix& student, double temperature);

// Index of the maximal entry per row; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Matrix& x);

}  // namespace wave
