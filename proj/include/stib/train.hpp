#pragma once

#include <string>
#include <vector>

#include "stib/dataset.hpp"
#include "stib/model.hpp"

namespace stib {

// Adam with the conventional decay constants (0.9 / 0.999, eps 1e-8).
// One instance per parameter group; matrices must be registered in a fixed
// order so runs are reproducible.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Matrix*> params, double lr);
  void step(const std::vector<Matrix>& grads);
  const std::vector<Matrix*>& params() const { return params_; }

 private:
  std::vector<Matrix*> params_;
  std::vector<Matrix> m_, v_;
  double lr_;
  long t_ = 0;
};

struct EpochTrace {
  double loss_main = 0.0;
  double loss_adv = 0.0;
  double mae_x = 0.0;
  double mae_y = 0.0;
  double kl = 0.0;
  double mi = 0.0;
};

struct FitResult {
  StibParams params;
  std::vector<EpochTrace> trace;
};

// Alternating minibatch training: one Adam step on the main objective over
// encoder/decoder/predictor, then adv_steps_per_main steps on the adversary
// objective over the bijection pair (skipped in stib_no_adv and vae modes).
// Deterministic given cfg.seed. Throws DivergenceError (naming epoch and
// batch) if any loss goes non-finite.
FitResult fit(const TrainConfig& cfg, const Dataset& train);

struct Metrics {
  double mae_x = 0.0;
  double mae_y = 0.0;
  double mi_gauss_bits = 0.0;
  double mi_ksg_bits = 0.0;
};

// Test metrics at the posterior mean (noise = 0). The MI metrics compare y
// against z0 (the full latent in vae mode).
Metrics evaluate(const StibParams& params, const TrainConfig& cfg,
                 const Dataset& test);

struct TraverseTable {
  std::vector<double> t;  // grid values taken by the first z0 coordinate
  Matrix xhat;            // steps x d_x
  Matrix yhat;            // steps x d_y, from the untouched z1
  Matrix ydec;            // steps x d_y, re-encoded from xhat
};

// Sweeps the first z0 coordinate over [lo, hi] while pinning the remaining
// latent coordinates at the anchor's posterior mean. ydec re-encodes the
// decoded input and predicts again; its spread is the invariance diagnostic.
TraverseTable traverse_z0(const StibParams& params, const TrainConfig& cfg,
                          const Matrix& anchor_x, double lo, double hi,
                          std::size_t steps);

// Spread statistic for the invariance diagnostic: sqrt of the mean
// per-column variance of the rows.
double column_spread(const Matrix& m);

// Binary parameter file: magic "STIB", version, config echo, then each
// group's matrices as little-endian 64-bit reals with shape headers.
void save_params(const StibParams& params, const TrainConfig& cfg,
                 const std::string& path);
std::pair<StibParams, TrainConfig> load_params(const std::string& path);

}  // namespace stib
