#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace attnhar {

using Vec = std::vector<double>;

// Dense row-major matrix of 64-bit reals.
//
// Weight application follows the row-vector convention: a D-vector x times a
// D x H matrix yields an H-vector (vecmat). Column-oriented maps (W v) are
// available through matvec for the sensor-attention energy network.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, Vec values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  Vec& values() { return values_; }
  const Vec& values() const { return values_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec values_;
};

// Standard matrix product. Throws ShapeError (carrying both shapes) when
// a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// out += v W   (len(v) == W.rows, len(out) == W.cols)
void vecmat_add(std::span<const double> v, const Matrix& w, std::span<double> out);

// out += W v   (len(v) == W.cols, len(out) == W.rows)
void matvec_add(const Matrix& w, std::span<const double> v, std::span<double> out);

// W += outer(u, v)   (len(u) == W.rows, len(v) == W.cols)
void outer_add(std::span<const double> u, std::span<const double> v, Matrix& w);

double dot(std::span<const double> a, std::span<const double> b);

// Numerically stabilized softmax (invariant to adding a constant to every
// entry). Throws ArgumentError on an empty or non-finite input.
Vec softmax(std::span<const double> v);

// Pulls dy back through y = softmax(z): returns dz.
Vec softmax_vjp(std::span<const double> y, std::span<const double> dy);

// Overflow-safe logistic function.
double sigmoid(double x);

enum class Activation { sigmoid, tanh };

// Elementwise sigmoid or tanh, shape preserved.
Matrix activation(Activation kind, const Matrix& m);

bool all_finite(std::span<const double> v);

}  // namespace attnhar
