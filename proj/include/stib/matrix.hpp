#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "stib/errors.hpp"

namespace stib {

// Dense row-major matrix of 64-bit reals. The single numeric carrier for
// data batches, parameters and latent codes. Values are treated as
// immutable once an operation has produced them.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  // Convenience for literals in tests: {{1,2},{3,4}}.
  Matrix(std::initializer_list<std::initializer_list<double>> m);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return rows * cols; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const;

  static Matrix identity(std::size_t n);
  static Matrix filled(std::size_t r, std::size_t c, double v) { return Matrix(r, c, v); }
};

bool all_finite(const Matrix& m);
double max_abs(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix transpose(const Matrix& a);
Matrix concat_cols(const Matrix& a, const Matrix& b);
// Columns [c0, c1).
Matrix slice_cols(const Matrix& a, std::size_t c0, std::size_t c1);
Matrix row(const Matrix& a, std::size_t i);

double sum(const Matrix& a);
double mean(const Matrix& a);
// Mean of |a - b| over all entries.
double mean_abs_diff(const Matrix& a, const Matrix& b);

// In-place accumulate: a += b (shapes must match). Used by the tape's
// backward pass; not part of the value-semantics surface.
void accumulate(Matrix& a, const Matrix& b);

}  // namespace stib
