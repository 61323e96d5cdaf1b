#include "stib/model.hpp"

#include <cmath>
#include <cstdlib>

#include "stib/linalg.hpp"

namespace stib {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::stib: return "stib";
    case Mode::stib_no_adv: return "stib_no_adv";
    case Mode::vae: return "vae";
  }
  return "?";
}

Mode mode_from_name(const std::string& s) {
  if (s == "stib") return Mode::stib;
  if (s == "stib_no_adv") return Mode::stib_no_adv;
  if (s == "vae") return Mode::vae;
  throw ParseError("unknown mode \"" + s + "\" (expected stib, stib_no_adv or vae)");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  throw ParseError("unknown activation \"" + s + "\" (expected tanh)");
}

void TrainConfig::validate() const {
  if (d_x < 1 || d_y < 1 || d_z0 < 1 || d_z1 < 1)
    throw DomainError("config: all dimensions must be >= 1");
  if (batch_size <= d_z0 + d_y)
    throw DomainError("config: batch_size must exceed d_z0 + d_y (" +
                      std::to_string(d_z0 + d_y) +
                      ") so correlation matrices are well posed");
  if (lambda < 0.0 || beta < 0.0)
    throw DomainError("config: lambda and beta must be >= 0");
  if (jitter < 0.0) throw DomainError("config: jitter must be >= 0");
  if (!(lr_main > 0.0) || !(lr_adv > 0.0))
    throw DomainError("config: learning rates must be > 0");
  if (epochs < 1) throw DomainError("config: epochs must be >= 1");
  if (batch_size < 2) throw DomainError("config: batch_size must be >= 2");
  if (adv_steps_per_main < 1)
    throw DomainError("config: adv_steps_per_main must be >= 1");
  if (kraskov_k < 1) throw DomainError("config: kraskov_k must be >= 1");
}

MlpParams make_mlp(std::size_t in, std::size_t out, std::size_t hidden_layers,
                   std::size_t hidden_width, Activation act, Rng& rng,
                   bool residual, bool zero_last_layer) {
  if (residual && in != out)
    throw ShapeError("make_mlp: residual net needs matching in/out widths");
  MlpParams p;
  p.activation = act;
  p.residual = residual;
  std::vector<std::size_t> widths;
  widths.push_back(in);
  for (std::size_t i = 0; i < hidden_layers; ++i) widths.push_back(hidden_width);
  widths.push_back(out);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    MlpLayer layer;
    layer.w = Matrix(fan_in, fan_out);
    layer.b = Matrix(1, fan_out);
    const bool zero = zero_last_layer && l + 2 == widths.size();
    if (!zero) {
      double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      // Residual nets see raw target units (spread of several sigma); a
      // tempered first layer keeps their tanh units out of saturation so
      // the adversary can adapt quickly.
      if (residual && l == 0) limit *= 0.25;
      for (double& v : layer.w.data) v = rng.uniform(-limit, limit);
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Matrix mlp_forward(const MlpParams& p, const Matrix& x) {
  Matrix h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Matrix z = matmul(h, p.layers[l].w);
    for (std::size_t i = 0; i < z.rows; ++i)
      for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += p.layers[l].b(0, j);
    if (l + 1 < p.layers.size())
      for (double& v : z.data) v = std::tanh(v);
    h = std::move(z);
  }
  if (p.residual) h = add(h, x);
  return h;
}

StibParams StibParams::init(const TrainConfig& cfg, Rng& rng) {
  StibParams p;
  p.encoder = make_mlp(cfg.d_x, 2 * cfg.d_z(), cfg.hidden_layers,
                       cfg.hidden_width, cfg.activation, rng);
  // The adversarial mode opens the latent in phases: the z0 head and the
  // decoder output start at zero, so the informative block z1 matures
  // against the predictor first and z0 then grows only the residual
  // structure the decoder still needs. Without the phasing, z0 swallows
  // target information in the first epochs, and once that information
  // settles into nonlinear form no bijection of y can expose it again.
  // The ablation and VAE baselines train conventionally.
  const bool phased = cfg.mode == Mode::stib;
  if (phased) {
    MlpLayer& last = p.encoder.layers.back();
    for (std::size_t r = 0; r < last.w.rows; ++r)
      for (std::size_t j = 0; j < cfg.d_z0; ++j) {
        last.w(r, j) = 0.0;              // mu columns of z0
        last.w(r, cfg.d_z() + j) = 0.0;  // logvar columns of z0
      }
  }
  p.decoder = make_mlp(cfg.d_z(), cfg.d_x, cfg.hidden_layers, cfg.hidden_width,
                       cfg.activation, rng,
                       /*residual=*/false,
                       /*zero_last_layer=*/phased);
  p.predictor = make_mlp(cfg.predictor_in(), cfg.d_y, cfg.hidden_layers,
                         cfg.hidden_width, cfg.activation, rng);
  p.bij_forward = make_mlp(cfg.d_y, cfg.d_y, kBijHiddenLayers, kBijHiddenWidth,
                           cfg.activation, rng, /*residual=*/true,
                           /*zero_last_layer=*/true);
  p.bij_inverse = make_mlp(cfg.d_y, cfg.d_y, kBijHiddenLayers, kBijHiddenWidth,
                           cfg.activation, rng, /*residual=*/true,
                           /*zero_last_layer=*/true);
  return p;
}

static void collect(MlpParams& p, std::vector<Matrix*>& out) {
  for (MlpLayer& l : p.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
}

std::vector<Matrix*> StibParams::main_group() {
  std::vector<Matrix*> out;
  collect(encoder, out);
  collect(decoder, out);
  collect(predictor, out);
  return out;
}

std::vector<Matrix*> StibParams::adversary_group() {
  std::vector<Matrix*> out;
  collect(bij_forward, out);
  collect(bij_inverse, out);
  return out;
}

std::vector<const Matrix*> StibParams::all_matrices() const {
  std::vector<const Matrix*> out;
  for (const MlpParams* p : {&encoder, &decoder, &predictor, &bij_forward,
                             &bij_inverse})
    for (const MlpLayer& l : p->layers) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
  return out;
}

void encode(const MlpParams& encoder, const Matrix& x, Matrix& mu, Matrix& logvar) {
  const Matrix out = mlp_forward(encoder, x);
  const std::size_t d = out.cols / 2;
  mu = slice_cols(out, 0, d);
  logvar = slice_cols(out, d, 2 * d);
  for (double& v : logvar.data)
    v = std::min(kLogvarClamp, std::max(-kLogvarClamp, v));
}

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise) {
  if (!mu.same_shape(logvar) || !mu.same_shape(noise))
    throw ShapeError("reparameterize: mu/logvar/noise shapes differ");
  Matrix z = mu;
  for (std::size_t i = 0; i < z.data.size(); ++i)
    z.data[i] += std::exp(0.5 * logvar.data[i]) * noise.data[i];
  return z;
}

std::pair<Matrix, Matrix> split_latent(const Matrix& z, std::size_t d0) {
  if (d0 > z.cols)
    throw ShapeError("split_latent: d0 = " + std::to_string(d0) +
                     " exceeds latent width " + std::to_string(z.cols));
  return {slice_cols(z, 0, d0), slice_cols(z, d0, z.cols)};
}

double kl_std_normal(const Matrix& mu, const Matrix& logvar) {
  if (!mu.same_shape(logvar))
    throw ShapeError("kl_std_normal: mu/logvar shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.data.size(); ++i) {
    const double m = mu.data[i], lv = logvar.data[i];
    s += m * m + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * s / static_cast<double>(mu.rows);
}

std::pair<double, CorrelationStats> gaussian_corr_mi(const Matrix& z0,
                                                     const Matrix& y,
                                                     double jitter) {
  if (z0.rows != y.rows)
    throw ShapeError("gaussian_corr_mi: row counts differ");
  if (z0.rows <= z0.cols + y.cols)
    throw ShapeError("gaussian_corr_mi: need more samples than joint dimensions");
  CorrelationStats st;
  st.r_joint = sample_correlation(concat_cols(z0, y));
  st.r_z0 = sample_correlation(z0);
  st.r_y = sample_correlation(y);
  st.logdet_joint = logdet_spd(st.r_joint, jitter);
  st.logdet_z0 = logdet_spd(st.r_z0, jitter);
  st.logdet_y = logdet_spd(st.r_y, jitter);
  const double mi = 0.5 * (st.logdet_z0 + st.logdet_y - st.logdet_joint);
  return {mi, std::move(st)};
}

namespace graph {

Tape::Id mlp(Tape& t, MlpParams& p, Tape::Id x, bool trainable,
             std::vector<ParamBinding>* reg) {
  const std::size_t batch = t.value(x).rows;
  const Tape::Id ones = t.constant(Matrix(batch, 1, 1.0));
  Tape::Id h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Tape::Id w, b;
    if (trainable) {
      w = t.param(p.layers[l].w);
      b = t.param(p.layers[l].b);
      if (reg) {
        reg->push_back({w, &p.layers[l].w});
        reg->push_back({b, &p.layers[l].b});
      }
    } else {
      w = t.constant(p.layers[l].w);
      b = t.constant(p.layers[l].b);
    }
    h = t.add(t.matmul(h, w), t.matmul(ones, b));
    if (l + 1 < p.layers.size()) h = t.tanh(h);
  }
  if (p.residual) h = t.add(h, x);
  return h;
}

Tape::Id correlation_jittered(Tape& t, Tape::Id z, double jitter) {
  const std::size_t batch = t.value(z).rows;
  const std::size_t d = t.value(z).cols;
  if (batch < 2) throw ShapeError("correlation: need at least 2 rows");
  const Tape::Id ones_row = t.constant(Matrix(1, batch, 1.0));
  const Tape::Id ones_col = t.constant(Matrix(batch, 1, 1.0));
  // Column means, then centered values.
  const Tape::Id mu = t.scalar_mul(t.matmul(ones_row, z), 1.0 / static_cast<double>(batch));
  const Tape::Id centered = t.sub(z, t.matmul(ones_col, mu));
  // Covariance diagonal via an identity mask, then per-column inverse scale
  // exp(-log(sd)) so the whole pipeline stays differentiable.
  const Tape::Id cov = t.scalar_mul(t.matmul(t.transpose(centered), centered),
                                    1.0 / static_cast<double>(batch - 1));
  const Tape::Id mask = t.constant(Matrix::identity(d));
  const Tape::Id diag = t.matmul(t.constant(Matrix(1, d, 1.0)),
                                 t.elementwise_mul(cov, mask));
  const Tape::Id inv_sd = t.exp(t.scalar_mul(t.log(diag), -0.5));
  const Tape::Id normalized = t.elementwise_mul(centered, t.matmul(ones_col, inv_sd));
  const Tape::Id corr = t.scalar_mul(t.matmul(t.transpose(normalized), normalized),
                                     1.0 / static_cast<double>(batch - 1));
  return t.add(corr, t.constant(scale(Matrix::identity(d), jitter)));
}

Tape::Id gaussian_mi(Tape& t, Tape::Id z0, Tape::Id ytilde, double jitter) {
  const Tape::Id joint = t.concat_cols(z0, ytilde);
  const Tape::Id ld_z0 = t.logdet(correlation_jittered(t, z0, jitter));
  const Tape::Id ld_y = t.logdet(correlation_jittered(t, ytilde, jitter));
  const Tape::Id ld_joint = t.logdet(correlation_jittered(t, joint, jitter));
  return t.scalar_mul(t.sub(t.add(ld_z0, ld_y), ld_joint), 0.5);
}

}  // namespace graph

LossGraph build_loss_main(StibParams& params, const Matrix& x, const Matrix& y,
                          const Matrix& noise, const TrainConfig& cfg,
                          bool include_recon) {
  if (x.rows != y.rows || x.cols != cfg.d_x || y.cols != cfg.d_y)
    throw ShapeError("loss_main: batch shapes do not match config (x " +
                     x.shape_str() + ", y " + y.shape_str() + ")");
  if (noise.rows != x.rows || noise.cols != cfg.d_z())
    throw ShapeError("loss_main: noise must be batch x d_z");

  LossGraph g;
  Tape& t = g.tape;
  const std::size_t batch = x.rows;
  const std::size_t dz = cfg.d_z();

  const Tape::Id xn = t.constant(x);
  const Tape::Id yn = t.constant(y);
  const Tape::Id noise_n = t.constant(noise);

  const Tape::Id enc_out = graph::mlp(t, params.encoder, xn, true, &g.trainable);
  const Tape::Id mu = t.slice_cols(enc_out, 0, dz);
  const Tape::Id logvar =
      t.clamp(t.slice_cols(enc_out, dz, 2 * dz), -kLogvarClamp, kLogvarClamp);
  const Tape::Id z =
      t.add(mu, t.elementwise_mul(t.exp(t.scalar_mul(logvar, 0.5)), noise_n));

  const Tape::Id xhat = graph::mlp(t, params.decoder, z, true, &g.trainable);
  const Tape::Id mse_x = t.mean(t.square(t.sub(xhat, xn)));

  const Tape::Id zp =
      cfg.mode == Mode::vae ? z : t.slice_cols(z, cfg.d_z0, dz);
  const Tape::Id yhat = graph::mlp(t, params.predictor, zp, true, &g.trainable);
  const Tape::Id mse_y = t.mean(t.square(t.sub(yhat, yn)));

  // KL to the standard normal prior, batch-mean of the per-sample sum.
  const Tape::Id ones_mat = t.constant(Matrix(batch, dz, 1.0));
  const Tape::Id kl_inner =
      t.sub(t.add(t.square(mu), t.exp(logvar)), t.add(ones_mat, logvar));
  const Tape::Id kl = t.scalar_mul(t.sum(kl_inner), 0.5 / static_cast<double>(batch));

  Tape::Id penalties = include_recon ? t.add(mse_x, mse_y) : mse_y;
  Tape::Id mi = 0;
  bool has_mi = false;
  if (cfg.mode == Mode::stib) {
    const Tape::Id z0 = t.slice_cols(z, 0, cfg.d_z0);
    // The bijection enters with frozen parameters: constants on the tape.
    const Tape::Id ytilde = graph::mlp(t, params.bij_forward, yn, false, nullptr);
    mi = graph::gaussian_mi(t, z0, ytilde, cfg.jitter);
    penalties = t.add(penalties, mi);
    has_mi = true;
  }
  g.loss = t.add(kl, t.scalar_mul(penalties, cfg.lambda));

  g.parts.total = t.value(g.loss)(0, 0);
  g.parts.kl = t.value(kl)(0, 0);
  g.parts.mse_x = t.value(mse_x)(0, 0);
  g.parts.mse_y = t.value(mse_y)(0, 0);
  g.parts.mi = has_mi ? t.value(mi)(0, 0) : 0.0;
  g.parts.mae_x = mean_abs_diff(t.value(xhat), x);
  g.parts.mae_y = mean_abs_diff(t.value(yhat), y);
  return g;
}

LossGraph build_loss_adversary(StibParams& params, const Matrix& x,
                               const Matrix& y, const Matrix& noise,
                               const TrainConfig& cfg) {
  if (x.rows != y.rows || x.cols != cfg.d_x || y.cols != cfg.d_y)
    throw ShapeError("loss_adversary: batch shapes do not match config");
  if (noise.rows != x.rows || noise.cols != cfg.d_z())
    throw ShapeError("loss_adversary: noise must be batch x d_z");

  // The encoder is frozen here: sample z0 with plain matrix math so no
  // gradient can reach encoder/decoder/predictor.
  Matrix mu, logvar;
  encode(params.encoder, x, mu, logvar);
  const Matrix z = reparameterize(mu, logvar, noise);
  return build_loss_adversary_given_z0(params, slice_cols(z, 0, cfg.d_z0), y, cfg);
}

LossGraph build_loss_adversary_given_z0(StibParams& params, const Matrix& z0,
                                        const Matrix& y, const TrainConfig& cfg) {
  if (z0.rows != y.rows || z0.cols != cfg.d_z0 || y.cols != cfg.d_y)
    throw ShapeError("loss_adversary: z0/y shapes do not match config");

  LossGraph g;
  Tape& t = g.tape;
  const Tape::Id yn = t.constant(y);
  const Tape::Id z0n = t.constant(z0);
  const Tape::Id ytilde = graph::mlp(t, params.bij_forward, yn, true, &g.trainable);
  const Tape::Id ycycle = graph::mlp(t, params.bij_inverse, ytilde, true, &g.trainable);
  const Tape::Id cycle = t.mean(t.square(t.sub(ycycle, yn)));
  const Tape::Id mi = graph::gaussian_mi(t, z0n, ytilde, cfg.jitter);
  g.loss = t.add(t.scalar_mul(mi, -1.0), t.scalar_mul(cycle, cfg.beta));

  g.parts.total = t.value(g.loss)(0, 0);
  g.parts.mi = t.value(mi)(0, 0);
  g.parts.cycle = t.value(cycle)(0, 0);
  return g;
}

double loss_main(StibParams& params, const Matrix& x, const Matrix& y,
                 const Matrix& noise, const TrainConfig& cfg) {
  return build_loss_main(params, x, y, noise, cfg).parts.total;
}

double loss_adversary(StibParams& params, const Matrix& x, const Matrix& y,
                      const Matrix& noise, const TrainConfig& cfg) {
  return build_loss_adversary(params, x, y, noise, cfg).parts.total;
}

}  // namespace stib
