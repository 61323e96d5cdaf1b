#pragma once

#include "stib/matrix.hpp"

namespace stib {

enum class MiUnits : std::uint8_t { nats, bits };

struct KsgConfig {
  int k = 3;
  MiUnits units = MiUnits::bits;
};

// Digamma via upward recurrence to x >= 8 followed by the asymptotic
// series; absolute error below 1e-10. Throws DomainError for x <= 0.
double digamma(double x);

// MI of a bivariate Gaussian with correlation rho, in bits. Test oracle.
double gaussian_mi_closed_form(double rho);

// Kraskov-style k-NN mutual information estimate between the rows of x and
// y (same row count). Max-norm throughout; counts use strict inequality
// against the k-th joint neighbor distance. A deterministic sub-1e-12
// relative jitter keyed to the row index breaks duplicate points. Units per
// cfg. Neighbor queries run in parallel over read-only data, capped by the
// STIB_THREADS environment variable; results reduce in row order.
double ksg_mi(const Matrix& x, const Matrix& y, const KsgConfig& cfg = {});

namespace detail {

enum class KnnBackend : std::uint8_t {
  automatic,  // brute force up to 4096 rows, kd-tree above
  brute,
  kdtree,
};

// Backend-pinned variant; brute and kdtree agree exactly on any input.
double ksg_mi_backend(const Matrix& x, const Matrix& y, const KsgConfig& cfg,
                      KnnBackend backend);

// Thread budget: min(hardware, STIB_THREADS if set), at least 1.
std::size_t eval_thread_budget();

}  // namespace detail

}  // namespace stib
