#include "stib/linalg.hpp"

#include <cmath>

namespace stib {

static void require_symmetric(const Matrix& a, const char* op) {
  if (a.rows != a.cols)
    throw ShapeError(std::string(op) + ": matrix not square, " + a.shape_str());
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = i + 1; j < a.cols; ++j)
      if (std::fabs(a(i, j) - a(j, i)) > 1e-9)
        throw DomainError(std::string(op) + ": matrix not symmetric at (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");
}

Matrix cholesky(const Matrix& a, double jitter) {
  require_symmetric(a, "cholesky");
  const std::size_t n = a.rows;
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = j; i < n; ++i) {
      double s = a(i, j);
      if (i == j) s += jitter;
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0))
          throw NotPositiveDefiniteError(
              "cholesky: pivot <= 0 at row " + std::to_string(j) +
              " (jitter " + std::to_string(jitter) + ")");
        l(j, j) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

double logdet_spd(const Matrix& a, double jitter) {
  const Matrix l = cholesky(a, jitter);
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows; ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Matrix spd_inverse_from_cholesky(const Matrix& l) {
  const std::size_t n = l.rows;
  // x = L^-1 by forward substitution, column by column; x is lower triangular.
  Matrix x(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    x(j, j) = 1.0 / l(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s += l(i, k) * x(k, j);
      x(i, j) = -s / l(i, i);
    }
  }
  // inv = x^T x; fill the upper triangle, mirror the rest.
  Matrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = j; k < n; ++k) s += x(k, i) * x(k, j);
      inv(i, j) = s;
      inv(j, i) = s;
    }
  }
  return inv;
}

Matrix sample_correlation(const Matrix& x) {
  const std::size_t b = x.rows, d = x.cols;
  if (b < 2) throw ShapeError("sample_correlation: need at least 2 rows, got " +
                              std::to_string(b));
  if (d == 0) throw ShapeError("sample_correlation: empty input");

  Matrix mu(1, d);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) mu(0, j) += x(i, j);
  for (std::size_t j = 0; j < d; ++j) mu(0, j) /= static_cast<double>(b);

  Matrix centered(b, d);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) centered(i, j) = x(i, j) - mu(0, j);

  // Unbiased covariance, upper triangle only.
  Matrix cov(d, d);
  const double inv_nm1 = 1.0 / static_cast<double>(b - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b; ++k) s += centered(k, i) * centered(k, j);
      cov(i, j) = s * inv_nm1;
    }
  }

  Matrix sd(1, d);
  for (std::size_t j = 0; j < d; ++j) {
    if (!(cov(j, j) > 0.0))
      throw DomainError("sample_correlation: column " + std::to_string(j) +
                        " has zero sample variance");
    sd(0, j) = std::sqrt(cov(j, j));
  }

  Matrix r(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    r(i, i) = 1.0;
    for (std::size_t j = i + 1; j < d; ++j) {
      double v = cov(i, j) / (sd(0, i) * sd(0, j));
      if (v > 1.0) v = 1.0;
      if (v < -1.0) v = -1.0;
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

}  // namespace stib
