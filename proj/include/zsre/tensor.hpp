#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace zsre {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

// y = W x + b
Vector affine(const Matrix& w, std::span<const double> x, std::span<const double> b);
// y = W^T dy
Vector transposed_times(const Matrix& w, std::span<const double> dy);
// dW += dy x^T
void add_outer(Matrix& dw, std::span<const double> dy, std::span<const double> x);

Vector tanh_of(std::span<const double> x);
// dx = dy * (1 - t^2) where t = tanh(x)
Vector tanh_backward(std::span<const double> t, std::span<const double> dy);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
void add_into(std::span<double> dst, std::span<const double> src, double scale = 1.0);

// Throws ErrorCode::InvalidArgument naming `what` when sizes differ.
void require_size(std::size_t got, std::size_t want, const std::string& what);

}  // namespace zsre
