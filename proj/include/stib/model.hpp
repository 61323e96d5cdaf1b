#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stib/matrix.hpp"
#include "stib/rng.hpp"
#include "stib/tape.hpp"

namespace stib {

enum class Activation : std::uint8_t { tanh };

enum class Mode : std::uint8_t { stib, stib_no_adv, vae };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);
const char* activation_name(Activation a);
Activation activation_from_name(const std::string& s);

struct MlpLayer {
  Matrix w;  // in x out
  Matrix b;  // 1 x out
};

// Plain fully connected stack; hidden layers use the activation tag, the
// output layer is linear. With `residual` set the input is added to the
// output (requires matching widths); used by the bijection nets so a
// zero-initialized last layer makes the net the identity map.
struct MlpParams {
  std::vector<MlpLayer> layers;
  Activation activation = Activation::tanh;
  bool residual = false;

  std::size_t in_dim() const { return layers.front().w.rows; }
  std::size_t out_dim() const { return layers.back().w.cols; }
};

MlpParams make_mlp(std::size_t in, std::size_t out, std::size_t hidden_layers,
                   std::size_t hidden_width, Activation act, Rng& rng,
                   bool residual = false, bool zero_last_layer = false);

Matrix mlp_forward(const MlpParams& p, const Matrix& x);

struct TrainConfig {
  std::size_t d_x = 2;
  std::size_t d_y = 2;
  std::size_t d_z0 = 2;
  std::size_t d_z1 = 1;
  std::size_t hidden_layers = 3;
  std::size_t hidden_width = 64;
  Activation activation = Activation::tanh;
  double lambda = 100.0;  // reconstruction/prediction/MI weight vs the KL term
  double beta = 1.0;      // bijection cycle penalty
  double jitter = 1e-5;
  double lr_main = 1e-3;
  double lr_adv = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 150;
  std::size_t adv_steps_per_main = 1;
  Mode mode = Mode::stib;
  std::int64_t seed = 1;
  int kraskov_k = 3;

  std::size_t d_z() const { return d_z0 + d_z1; }
  // In vae mode the predictor and the evaluation MI read the full latent.
  std::size_t predictor_in() const { return mode == Mode::vae ? d_z() : d_z1; }
  void validate() const;
};

// All trainable parameter groups. The bijection pair maps the target to its
// proxy and back; both are residual nets that start as the identity.
struct StibParams {
  MlpParams encoder;      // x -> (mu || logvar), width 2*(d_z0+d_z1)
  MlpParams decoder;      // z -> x_hat
  MlpParams predictor;    // z1 (full z in vae mode) -> y_hat
  MlpParams bij_forward;  // y -> y_tilde
  MlpParams bij_inverse;  // y_tilde -> y

  static StibParams init(const TrainConfig& cfg, Rng& rng);
  std::vector<Matrix*> main_group();       // encoder + decoder + predictor
  std::vector<Matrix*> adversary_group();  // bijection pair
  std::vector<const Matrix*> all_matrices() const;
};

// Hidden geometry of the bijection nets (the target dimension is tiny, so a
// fixed small stack suffices).
inline constexpr std::size_t kBijHiddenLayers = 2;
inline constexpr std::size_t kBijHiddenWidth = 32;
inline constexpr double kLogvarClamp = 10.0;

// Posterior parameters for a batch; logvar is clamped to [-10, 10].
void encode(const MlpParams& encoder, const Matrix& x, Matrix& mu, Matrix& logvar);

// z = mu + exp(logvar / 2) .* noise
Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise);

// (first d0 columns, remaining columns)
std::pair<Matrix, Matrix> split_latent(const Matrix& z, std::size_t d0);

// Batch mean of 0.5 * sum_dims(mu^2 + e^logvar - 1 - logvar); >= 0.
double kl_std_normal(const Matrix& mu, const Matrix& logvar);

struct CorrelationStats {
  Matrix r_joint;
  Matrix r_z0;
  Matrix r_y;
  double logdet_joint = 0.0;  // of the jittered matrices
  double logdet_z0 = 0.0;
  double logdet_y = 0.0;
};

// 0.5 * (ln|R_z0| + ln|R_y| - ln|R_joint|) on sample correlation matrices
// (each jittered before factorization), in nats. Nonnegative up to rounding;
// exactly invariant under per-dimension sign flips and power-of-two scalings
// of either argument, and invariant to within rounding under any other
// per-dimension affine map.
std::pair<double, CorrelationStats> gaussian_corr_mi(const Matrix& z0,
                                                     const Matrix& y,
                                                     double jitter);

// --- differentiable graph builders ------------------------------------

struct ParamBinding {
  Tape::Id node;
  Matrix* target;  // the matrix inside StibParams this node mirrors
};

struct LossParts {
  double total = 0.0;
  double kl = 0.0;
  double mse_x = 0.0;
  double mse_y = 0.0;
  double mi = 0.0;     // Gaussian-correlation MI term (nats)
  double cycle = 0.0;  // adversary cycle penalty
  double mae_x = 0.0;  // diagnostics, not part of the loss
  double mae_y = 0.0;
};

struct LossGraph {
  Tape tape;
  Tape::Id loss = 0;
  std::vector<ParamBinding> trainable;
  LossParts parts;
};

// Step-one objective: KL + lambda*(MSE_x + MSE_y) (+ lambda * gaussian MI
// between z0 and the frozen bijection's output in stib mode). Gradients
// flow to encoder/decoder/predictor only; the bijection enters as constants.
// With include_recon false the reconstruction term is dropped; the training
// loop uses this during the adversarial mode's warm-up, before the decoder
// joins the game.
LossGraph build_loss_main(StibParams& params, const Matrix& x, const Matrix& y,
                          const Matrix& noise, const TrainConfig& cfg,
                          bool include_recon = true);

// Adversary objective: -gaussian MI(z0, bij_forward(y)) + beta * cycle
// penalty. z0 comes from a plain (non-differentiable) encoder pass, so only
// the bijection pair receives gradients.
LossGraph build_loss_adversary(StibParams& params, const Matrix& x,
                               const Matrix& y, const Matrix& noise,
                               const TrainConfig& cfg);

// Same objective with the sampled z0 supplied by the caller; the training
// loop reuses one sample across the adversary's inner steps.
LossGraph build_loss_adversary_given_z0(StibParams& params, const Matrix& z0,
                                        const Matrix& y, const TrainConfig& cfg);

// Convenience evaluations of the two objectives (used by tests/oracles).
double loss_main(StibParams& params, const Matrix& x, const Matrix& y,
                 const Matrix& noise, const TrainConfig& cfg);
double loss_adversary(StibParams& params, const Matrix& x, const Matrix& y,
                      const Matrix& noise, const TrainConfig& cfg);

namespace graph {

// Shared tape subgraphs (exposed for tests).
Tape::Id mlp(Tape& t, MlpParams& p, Tape::Id x, bool trainable,
             std::vector<ParamBinding>* reg);
// Correlation matrix of the columns of z (B x d) plus jitter on the diagonal.
Tape::Id correlation_jittered(Tape& t, Tape::Id z, double jitter);
Tape::Id gaussian_mi(Tape& t, Tape::Id z0, Tape::Id ytilde, double jitter);

}  // namespace graph

}  // namespace stib
