#include "attnhar/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnhar/errors.hpp"

namespace attnhar {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, Vec values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("matrix init: " + std::to_string(values_.size()) +
                     " values for shape " + shape_str(rows_, cols_));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw ShapeError("from_rows: ragged row " + std::to_string(i));
    }
    std::copy(row.begin(), row.end(), m.row(i).begin());
    ++i;
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + i * a.cols();
    double* orow = out.data() + i * out.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      const double* brow = b.data() + k * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

void vecmat_add(std::span<const double> v, const Matrix& w, std::span<double> out) {
  if (v.size() != w.rows() || out.size() != w.cols()) {
    throw ShapeError("vecmat: vec " + std::to_string(v.size()) + ", mat " +
                     shape_str(w.rows(), w.cols()) + ", out " +
                     std::to_string(out.size()));
  }
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double vi = v[i];
    const double* wrow = w.data() + i * w.cols();
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += vi * wrow[j];
  }
}

void matvec_add(const Matrix& w, std::span<const double> v, std::span<double> out) {
  if (v.size() != w.cols() || out.size() != w.rows()) {
    throw ShapeError("matvec: mat " + shape_str(w.rows(), w.cols()) + ", vec " +
                     std::to_string(v.size()) + ", out " +
                     std::to_string(out.size()));
  }
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* wrow = w.data() + i * w.cols();
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) acc += wrow[j] * v[j];
    out[i] += acc;
  }
}

void outer_add(std::span<const double> u, std::span<const double> v, Matrix& w) {
  if (u.size() != w.rows() || v.size() != w.cols()) {
    throw ShapeError("outer: u " + std::to_string(u.size()) + ", v " +
                     std::to_string(v.size()) + ", mat " +
                     shape_str(w.rows(), w.cols()));
  }
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double ui = u[i];
    double* wrow = w.data() + i * w.cols();
    for (std::size_t j = 0; j < w.cols(); ++j) wrow[j] += ui * v[j];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Vec softmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("softmax: empty input");
  if (!all_finite(v)) throw ArgumentError("softmax: non-finite input");
  const double m = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

Vec softmax_vjp(std::span<const double> y, std::span<const double> dy) {
  if (y.size() != dy.size()) {
    throw ShapeError("softmax_vjp: " + std::to_string(y.size()) + " vs " +
                     std::to_string(dy.size()));
  }
  const double inner = dot(y, dy);
  Vec dz(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dz[i] = y[i] * (dy[i] - inner);
  return dz;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix activation(Activation kind, const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  const double* src = m.data();
  double* dst = out.data();
  if (kind == Activation::sigmoid) {
    for (std::size_t i = 0; i < m.size(); ++i) dst[i] = sigmoid(src[i]);
  } else {
    for (std::size_t i = 0; i < m.size(); ++i) dst[i] = std::tanh(src[i]);
  }
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace attnhar
