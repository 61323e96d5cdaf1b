#include "stib/matrix.hpp"

#include <cmath>

namespace stib {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> m) {
  rows = m.size();
  cols = rows ? m.begin()->size() : 0;
  data.reserve(rows * cols);
  for (const auto& r : m) {
    if (r.size() != cols) throw ShapeError("matrix literal: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
}

std::string Matrix::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double v : m.data) r = std::max(r, std::fabs(v));
  return r;
}

static void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": mismatched shapes " + a.shape_str() +
                     " vs " + b.shape_str());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " * " +
                     b.shape_str());
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  Matrix c(m, n);
  const double* A = a.data.data();
  const double* B = b.data.data();
  double* C = c.data.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = B + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw ShapeError("matmul_nt: incompatible shapes " + a.shape_str() + " * " +
                     b.shape_str() + "^T");
  const std::size_t m = a.rows, k = a.cols, n = b.rows;
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    double* crow = c.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data.data() + j * k;
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw ShapeError("matmul_tn: incompatible shapes " + a.shape_str() + "^T * " +
                     b.shape_str());
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  Matrix c(k, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    const double* brow = b.data.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* crow = c.data.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "elementwise-mul");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (double& v : c.data) v *= s;
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix c(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) c(j, i) = a(i, j);
  return c;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw ShapeError("concat-cols: row counts differ, " + a.shape_str() + " vs " +
                     b.shape_str());
  Matrix c(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) c(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols; ++j) c(i, a.cols + j) = b(i, j);
  }
  return c;
}

Matrix slice_cols(const Matrix& a, std::size_t c0, std::size_t c1) {
  if (c0 > c1 || c1 > a.cols)
    throw ShapeError("slice-cols: range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") out of bounds for " + a.shape_str());
  Matrix c(a.rows, c1 - c0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = c0; j < c1; ++j) c(i, j - c0) = a(i, j);
  return c;
}

Matrix row(const Matrix& a, std::size_t i) {
  if (i >= a.rows)
    throw ShapeError("row: index " + std::to_string(i) + " out of bounds for " +
                     a.shape_str());
  Matrix c(1, a.cols);
  for (std::size_t j = 0; j < a.cols; ++j) c(0, j) = a(i, j);
  return c;
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data) s += v;
  return s;
}

double mean(const Matrix& a) {
  if (a.size() == 0) throw ShapeError("mean: empty matrix");
  return sum(a) / static_cast<double>(a.size());
}

double mean_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "mean_abs_diff");
  if (a.size() == 0) throw ShapeError("mean_abs_diff: empty matrix");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    s += std::fabs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.size());
}

void accumulate(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "accumulate");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace stib
