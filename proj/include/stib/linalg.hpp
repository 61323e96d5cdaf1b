#pragma once

#include "stib/matrix.hpp"

namespace stib {

// Lower-triangular L with L*L^T = a + jitter*I. Requires a square and
// symmetric within 1e-9 absolute; throws NotPositiveDefiniteError if any
// pivot is <= 0 after jitter.
Matrix cholesky(const Matrix& a, double jitter = 0.0);

// 2 * sum(log diag(L)) for the Cholesky factor L of a + jitter*I.
double logdet_spd(const Matrix& a, double jitter = 0.0);

// Inverse of L*L^T from its Cholesky factor; symmetric by construction
// (upper triangle computed, lower mirrored).
Matrix spd_inverse_from_cholesky(const Matrix& l);

// Pearson correlation matrix of the columns of x (B x d, B >= 2), from the
// unbiased sample covariance. Unit diagonal is set exactly; off-diagonal
// entries are clamped to [-1, 1]. Throws DomainError naming any column with
// zero sample variance.
Matrix sample_correlation(const Matrix& x);

}  // namespace stib
