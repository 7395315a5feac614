#include "zsre/tensor.hpp"

#include <cmath>

#include "zsre/error.hpp"

namespace zsre {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void require_size(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    fail(ErrorCode::InvalidArgument,
         "dimension mismatch in " + what + ": got " + std::to_string(got) + ", expected " +
             std::to_string(want));
  }
}

Vector affine(const Matrix& w, std::span<const double> x, std::span<const double> b) {
  require_size(x.size(), w.cols, "affine input");
  require_size(b.size(), w.rows, "affine bias");
  Vector y(b.begin(), b.end());
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* wr = w.data.data() + r * w.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
  return y;
}

Vector transposed_times(const Matrix& w, std::span<const double> dy) {
  require_size(dy.size(), w.rows, "transposed product");
  Vector dx(w.cols, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const double* wr = w.data.data() + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) dx[c] += wr[c] * g;
  }
  return dx;
}

void add_outer(Matrix& dw, std::span<const double> dy, std::span<const double> x) {
  for (std::size_t r = 0; r < dw.rows; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    double* dr = dw.data.data() + r * dw.cols;
    for (std::size_t c = 0; c < dw.cols; ++c) dr[c] += g * x[c];
  }
}

Vector tanh_of(std::span<const double> x) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

Vector tanh_backward(std::span<const double> t, std::span<const double> dy) {
  Vector dx(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) dx[i] = dy[i] * (1.0 - t[i] * t[i]);
  return dx;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_size(b.size(), a.size(), "dot product");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void add_into(std::span<double> dst, std::span<const double> src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace zsre
