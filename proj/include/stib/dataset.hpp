#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stib/matrix.hpp"

namespace stib {

struct SpiralConfig {
  std::size_t n = 8192;
  std::uint64_t seed = 1;
  bool noise_enabled = true;
  double b = 10.0;                  // spiral constant
  double input_noise_scale = 0.1;   // on the latent angle
  double target_noise_scale = 0.2;  // on each target coordinate
};

struct Dataset {
  Matrix x;  // n x d_x
  Matrix y;  // n x d_y
  std::vector<std::string> column_names;  // x0..x{dx-1}, y0..y{dy-1}

  std::size_t rows() const { return x.rows; }
};

// Target map for one input point with explicit noise variates (e perturbs
// the angle, e1/e2 the two target coordinates). Pass zeros for the
// noise-free spiral.
void spiral_targets(const SpiralConfig& cfg, double x0, double x1, double e,
                    double e1, double e2, double& y0, double& y1);

// Two uniform inputs on [-4, 4]; the targets trace a spiral whose angle and
// radius are both driven by 2*x0 + x1. Deterministic for a given config:
// the noise variates are always drawn, and zeroed when noise is disabled,
// so the x columns match between noise on/off runs of the same seed.
Dataset gen_spiral(const SpiralConfig& cfg);

// CSV with header "x0,...,y0,...", LF line endings, up to 17 significant
// digits per value (round-trips doubles exactly).
void save_csv(const Dataset& ds, const std::string& path);
Dataset load_csv(const std::string& path);

// FNV-1a over dimensions and raw values; stable fingerprint for manifests.
std::uint64_t dataset_fingerprint(const Dataset& ds);

// Optional per-column affine scaler for external data; the artificial
// experiment runs on raw units.
struct Standardizer {
  Matrix means;   // 1 x d
  Matrix scales;  // 1 x d, never zero

  static Standardizer fit(const Matrix& m);
  Matrix transform(const Matrix& m) const;
  Matrix inverse(const Matrix& m) const;
};

}  // namespace stib
