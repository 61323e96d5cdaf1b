#include "stib/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <cstdlib>
#include <memory>
#include <numeric>
#include <tuple>

#include "stib/ksg.hpp"

namespace stib {

AdamOptimizer::AdamOptimizer(std::vector<Matrix*> params, double lr)
    : params_(std::move(params)), lr_(lr) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Matrix* p : params_) {
    m_.emplace_back(p->rows, p->cols);
    v_.emplace_back(p->rows, p->cols);
  }
}

void AdamOptimizer::step(const std::vector<Matrix>& grads) {
  if (grads.size() != params_.size())
    throw ShapeError("adam: gradient count mismatch");
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Matrix& w = *params_[i];
    const Matrix& g = grads[i];
    if (!w.same_shape(g)) throw ShapeError("adam: gradient shape mismatch");
    for (std::size_t k = 0; k < w.data.size(); ++k) {
      const double gv = g.data[k];
      m_[i].data[k] = b1 * m_[i].data[k] + (1.0 - b1) * gv;
      v_[i].data[k] = b2 * v_[i].data[k] + (1.0 - b2) * gv * gv;
      const double mhat = m_[i].data[k] / c1;
      const double vhat = v_[i].data[k] / c2;
      w.data[k] -= lr_ * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx,
                   std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols);
  for (std::size_t i = begin; i < end; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(i - begin, j) = m(idx[i], j);
  return out;
}

Matrix draw_noise(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix n(rows, cols);
  for (double& v : n.data) v = rng.normal();
  return n;
}

// Deterministic reconstruction/prediction errors at the posterior mean.
std::pair<double, double> posterior_mean_maes(const StibParams& params,
                                              const TrainConfig& cfg,
                                              const Dataset& data) {
  Matrix mu, logvar;
  encode(params.encoder, data.x, mu, logvar);
  const Matrix xhat = mlp_forward(params.decoder, mu);
  const Matrix zp =
      cfg.mode == Mode::vae ? mu : slice_cols(mu, cfg.d_z0, mu.cols);
  const Matrix yhat = mlp_forward(params.predictor, zp);
  return {mean_abs_diff(xhat, data.x), mean_abs_diff(yhat, data.y)};
}

// Gradients for the optimizer, in registration order; zero for parameters
// the graph does not touch.
std::vector<Matrix> collect_grads(const LossGraph& g,
                                  const std::vector<Matrix*>& group) {
  std::vector<Matrix> grads;
  grads.reserve(group.size());
  for (Matrix* p : group) {
    const ParamBinding* found = nullptr;
    for (const ParamBinding& pb : g.trainable)
      if (pb.target == p) {
        found = &pb;
        break;
      }
    grads.push_back(found ? g.tape.adjoint(found->node) : Matrix(p->rows, p->cols));
  }
  return grads;
}

}  // namespace

FitResult fit(const TrainConfig& cfg, const Dataset& train) {
  cfg.validate();
  if (train.rows() == 0) throw ShapeError("fit: empty training set");
  if (train.x.cols != cfg.d_x || train.y.cols != cfg.d_y)
    throw ShapeError("fit: dataset is " + train.x.shape_str() + "/" +
                     train.y.shape_str() + " but config wants d_x=" +
                     std::to_string(cfg.d_x) + ", d_y=" + std::to_string(cfg.d_y));
  if (train.rows() < cfg.batch_size)
    throw ShapeError("fit: training set smaller than one batch");

  Rng rng(static_cast<std::uint64_t>(cfg.seed));
  FitResult result;
  result.params = StibParams::init(cfg, rng);
  StibParams& params = result.params;

  AdamOptimizer opt_main(params.main_group(), cfg.lr_main);
  auto opt_adv = std::make_unique<AdamOptimizer>(params.adversary_group(), cfg.lr_adv);
  const bool adversarial = cfg.mode == Mode::stib;

  // The bijection pair periodically snaps back to the identity (zeroed
  // last layers, fresh optimizer state). A drifted adversary can mask
  // correlation that the identity map would expose, and the game then
  // settles with a visible leak; the reset restarts exposure from the
  // strongest simple baseline while keeping the adapted hidden features.
  constexpr std::size_t kAdvResetPeriod = 10;  // epochs
  auto reset_adversary = [&] {
    for (MlpParams* net : {&params.bij_forward, &params.bij_inverse}) {
      MlpLayer& last = net->layers.back();
      for (double& v : last.w.data) v = 0.0;
      for (double& v : last.b.data) v = 0.0;
    }
    opt_adv = std::make_unique<AdamOptimizer>(params.adversary_group(), cfg.lr_adv);
  };

  // The adversarial mode trains the prediction path alone first; once z1
  // carries the target factor, the reconstruction term switches on and the
  // decoder pulls only the remaining (invariant) structure through z0.
  std::size_t recon_warmup =
      adversarial ? std::min<std::size_t>(40, cfg.epochs / 5) : 0;
  if (const char* probe = std::getenv("STIB_PROBE_WARMUP"))
    recon_warmup = adversarial ? std::strtoul(probe, nullptr, 10) : 0;

  const std::size_t n = train.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (adversarial && epoch > 0 && epoch % kAdvResetPeriod == 0)
      reset_adversary();
    // Fisher-Yates with the run's own stream.
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }
    EpochTrace trace;
    const std::size_t batches = n / cfg.batch_size;  // drop a ragged tail
    std::size_t adv_count = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = begin + cfg.batch_size;
      const Matrix bx = gather_rows(train.x, order, begin, end);
      const Matrix by = gather_rows(train.y, order, begin, end);
      try {
        {
          const Matrix noise = draw_noise(rng, cfg.batch_size, cfg.d_z());
          LossGraph g = build_loss_main(params, bx, by, noise, cfg,
                                        epoch >= recon_warmup);
          if (!std::isfinite(g.parts.total))
            throw DivergenceError("non-finite main loss");
          g.tape.backward(g.loss);
          opt_main.step(collect_grads(g, opt_main.params()));
          trace.loss_main += g.parts.total;
          trace.kl += g.parts.kl;
          trace.mi += g.parts.mi;
        }
        if (adversarial) {
          // One latent sample serves the whole inner loop; the bijection
          // pair takes several steps against it.
          const Matrix noise = draw_noise(rng, cfg.batch_size, cfg.d_z());
          Matrix mu, logvar;
          encode(params.encoder, bx, mu, logvar);
          const Matrix z0 =
              slice_cols(reparameterize(mu, logvar, noise), 0, cfg.d_z0);
          for (std::size_t s = 0; s < cfg.adv_steps_per_main; ++s) {
            LossGraph g = build_loss_adversary_given_z0(params, z0, by, cfg);
            if (!std::isfinite(g.parts.total))
              throw DivergenceError("non-finite adversary loss");
            g.tape.backward(g.loss);
            opt_adv->step(collect_grads(g, opt_adv->params()));
            trace.loss_adv += g.parts.total;
            ++adv_count;
          }
        }
      } catch (const Error& e) {
        throw DivergenceError("fit diverged at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(b) + ": " + e.what());
      }
    }
    const double inv_b = 1.0 / static_cast<double>(batches);
    trace.loss_main *= inv_b;
    trace.kl *= inv_b;
    trace.mi *= inv_b;
    trace.loss_adv =
        adv_count ? trace.loss_adv / static_cast<double>(adv_count) : 0.0;
    // End-of-epoch reconstruction curve, free of reparameterization noise.
    std::tie(trace.mae_x, trace.mae_y) = posterior_mean_maes(params, cfg, train);
    result.trace.push_back(trace);
  }
  return result;
}

Metrics evaluate(const StibParams& params, const TrainConfig& cfg,
                 const Dataset& test) {
  if (test.x.cols != cfg.d_x || test.y.cols != cfg.d_y)
    throw ShapeError("evaluate: dataset is " + test.x.shape_str() + "/" +
                     test.y.shape_str() + " but model wants d_x=" +
                     std::to_string(cfg.d_x) + ", d_y=" + std::to_string(cfg.d_y));
  Matrix mu, logvar;
  encode(params.encoder, test.x, mu, logvar);

  Metrics m;
  const Matrix xhat = mlp_forward(params.decoder, mu);
  m.mae_x = mean_abs_diff(xhat, test.x);

  const Matrix zp = cfg.mode == Mode::vae ? mu : slice_cols(mu, cfg.d_z0, mu.cols);
  const Matrix yhat = mlp_forward(params.predictor, zp);
  m.mae_y = mean_abs_diff(yhat, test.y);

  const Matrix zmi = cfg.mode == Mode::vae ? mu : slice_cols(mu, 0, cfg.d_z0);
  m.mi_gauss_bits =
      gaussian_corr_mi(zmi, test.y, cfg.jitter).first / std::log(2.0);
  KsgConfig kc;
  kc.k = cfg.kraskov_k;
  kc.units = MiUnits::bits;
  m.mi_ksg_bits = ksg_mi(zmi, test.y, kc);
  return m;
}

TraverseTable traverse_z0(const StibParams& params, const TrainConfig& cfg,
                          const Matrix& anchor_x, double lo, double hi,
                          std::size_t steps) {
  if (anchor_x.rows != 1 || anchor_x.cols != cfg.d_x)
    throw ShapeError("traverse_z0: anchor must be 1 x d_x");
  if (steps < 2) throw DomainError("traverse_z0: need at least 2 grid points");

  Matrix mu, logvar;
  encode(params.encoder, anchor_x, mu, logvar);

  TraverseTable out;
  out.t.resize(steps);
  Matrix zs(steps, mu.cols);
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = lo + (hi - lo) * static_cast<double>(i) /
                              static_cast<double>(steps - 1);
    out.t[i] = t;
    for (std::size_t j = 0; j < mu.cols; ++j) zs(i, j) = mu(0, j);
    zs(i, 0) = t;  // first z0 coordinate carries the sweep
  }

  out.xhat = mlp_forward(params.decoder, zs);
  const Matrix zp =
      cfg.mode == Mode::vae ? zs : slice_cols(zs, cfg.d_z0, zs.cols);
  out.yhat = mlp_forward(params.predictor, zp);

  Matrix mu2, logvar2;
  encode(params.encoder, out.xhat, mu2, logvar2);
  const Matrix zp2 =
      cfg.mode == Mode::vae ? mu2 : slice_cols(mu2, cfg.d_z0, mu2.cols);
  out.ydec = mlp_forward(params.predictor, zp2);
  return out;
}

double column_spread(const Matrix& m) {
  if (m.rows < 2) throw ShapeError("column_spread: need at least 2 rows");
  double total_var = 0.0;
  for (std::size_t j = 0; j < m.cols; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) mu += m(i, j);
    mu /= static_cast<double>(m.rows);
    double var = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
      const double d = m(i, j) - mu;
      var += d * d;
    }
    total_var += var / static_cast<double>(m.rows - 1);
  }
  return std::sqrt(total_var / static_cast<double>(m.cols));
}

// --- parameter file ----------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'T', 'I', 'B'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}

  void need(std::size_t n, const char* what) const {
    if (pos + n > buf.size())
      throw ParseError(std::string("parameter file truncated while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
};

void put_matrix(std::string& out, const Matrix& m) {
  put_u32(out, static_cast<std::uint32_t>(m.rows));
  put_u32(out, static_cast<std::uint32_t>(m.cols));
  for (double v : m.data) put_f64(out, v);
}

Matrix read_matrix(Reader& r, const char* what) {
  const std::uint32_t rows = r.u32(what);
  const std::uint32_t cols = r.u32(what);
  Matrix m(rows, cols);
  for (double& v : m.data) v = r.f64(what);
  return m;
}

void put_mlp(std::string& out, const MlpParams& p) {
  put_u32(out, static_cast<std::uint32_t>(p.layers.size()));
  put_u32(out, static_cast<std::uint32_t>(p.activation));
  put_u32(out, p.residual ? 1 : 0);
  for (const MlpLayer& l : p.layers) {
    put_matrix(out, l.w);
    put_matrix(out, l.b);
  }
}

MlpParams read_mlp(Reader& r, const char* group) {
  MlpParams p;
  const std::uint32_t n_layers = r.u32(group);
  const std::uint32_t act = r.u32(group);
  if (act != 0)
    throw ParseError(std::string("parameter file: unknown activation tag in ") + group);
  p.activation = Activation::tanh;
  p.residual = r.u32(group) != 0;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    MlpLayer l;
    l.w = read_matrix(r, group);
    l.b = read_matrix(r, group);
    p.layers.push_back(std::move(l));
  }
  return p;
}

void put_config(std::string& out, const TrainConfig& c) {
  put_u32(out, static_cast<std::uint32_t>(c.d_x));
  put_u32(out, static_cast<std::uint32_t>(c.d_y));
  put_u32(out, static_cast<std::uint32_t>(c.d_z0));
  put_u32(out, static_cast<std::uint32_t>(c.d_z1));
  put_u32(out, static_cast<std::uint32_t>(c.hidden_layers));
  put_u32(out, static_cast<std::uint32_t>(c.hidden_width));
  put_u32(out, static_cast<std::uint32_t>(c.activation));
  put_f64(out, c.lambda);
  put_f64(out, c.beta);
  put_f64(out, c.jitter);
  put_f64(out, c.lr_main);
  put_f64(out, c.lr_adv);
  put_u32(out, static_cast<std::uint32_t>(c.batch_size));
  put_u32(out, static_cast<std::uint32_t>(c.epochs));
  put_u32(out, static_cast<std::uint32_t>(c.adv_steps_per_main));
  put_u32(out, static_cast<std::uint32_t>(c.mode));
  put_u64(out, static_cast<std::uint64_t>(c.seed));
  put_u32(out, static_cast<std::uint32_t>(c.kraskov_k));
}

TrainConfig read_config(Reader& r) {
  TrainConfig c;
  c.d_x = r.u32("config");
  c.d_y = r.u32("config");
  c.d_z0 = r.u32("config");
  c.d_z1 = r.u32("config");
  c.hidden_layers = r.u32("config");
  c.hidden_width = r.u32("config");
  const std::uint32_t act = r.u32("config");
  if (act != 0) throw ParseError("parameter file: unknown activation tag in config");
  c.activation = Activation::tanh;
  c.lambda = r.f64("config");
  c.beta = r.f64("config");
  c.jitter = r.f64("config");
  c.lr_main = r.f64("config");
  c.lr_adv = r.f64("config");
  c.batch_size = r.u32("config");
  c.epochs = r.u32("config");
  c.adv_steps_per_main = r.u32("config");
  const std::uint32_t mode = r.u32("config");
  if (mode > 2) throw ParseError("parameter file: unknown mode tag in config");
  c.mode = static_cast<Mode>(mode);
  c.seed = static_cast<std::int64_t>(r.u64("config"));
  c.kraskov_k = static_cast<int>(r.u32("config"));
  return c;
}

void check_mlp_shapes(const MlpParams& p, std::size_t in, std::size_t out,
                      const char* group) {
  if (p.layers.empty())
    throw ParseError(std::string("parameter file: empty ") + group + " group");
  if (p.in_dim() != in || p.out_dim() != out)
    throw ParseError(std::string("parameter file: shape mismatch in group ") +
                     group + " (got " + std::to_string(p.in_dim()) + "->" +
                     std::to_string(p.out_dim()) + ", config implies " +
                     std::to_string(in) + "->" + std::to_string(out) + ")");
  for (std::size_t l = 0; l + 1 < p.layers.size(); ++l)
    if (p.layers[l].w.cols != p.layers[l + 1].w.rows)
      throw ParseError(std::string("parameter file: broken layer chain in group ") +
                       group);
  for (const MlpLayer& l : p.layers)
    if (l.b.rows != 1 || l.b.cols != l.w.cols)
      throw ParseError(std::string("parameter file: bias shape mismatch in group ") +
                       group);
}

}  // namespace

void save_params(const StibParams& params, const TrainConfig& cfg,
                 const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_config(out, cfg);
  put_mlp(out, params.encoder);
  put_mlp(out, params.decoder);
  put_mlp(out, params.predictor);
  put_mlp(out, params.bij_forward);
  put_mlp(out, params.bij_inverse);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_params: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("save_params: write failed for " + path);
}

std::pair<StibParams, TrainConfig> load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_params: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  Reader r(buf);
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw ParseError("parameter file: bad magic (not a STIB parameter file)");
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion)
    throw ParseError("parameter file: unsupported format version " +
                     std::to_string(version));

  const TrainConfig cfg = read_config(r);
  StibParams p;
  p.encoder = read_mlp(r, "encoder");
  p.decoder = read_mlp(r, "decoder");
  p.predictor = read_mlp(r, "predictor");
  p.bij_forward = read_mlp(r, "bij_forward");
  p.bij_inverse = read_mlp(r, "bij_inverse");
  if (r.pos != buf.size())
    throw ParseError("parameter file: trailing bytes after parameter groups");

  check_mlp_shapes(p.encoder, cfg.d_x, 2 * cfg.d_z(), "encoder");
  check_mlp_shapes(p.decoder, cfg.d_z(), cfg.d_x, "decoder");
  check_mlp_shapes(p.predictor, cfg.predictor_in(), cfg.d_y, "predictor");
  check_mlp_shapes(p.bij_forward, cfg.d_y, cfg.d_y, "bij_forward");
  check_mlp_shapes(p.bij_inverse, cfg.d_y, cfg.d_y, "bij_inverse");
  return {std::move(p), cfg};
}

}  // namespace stib
