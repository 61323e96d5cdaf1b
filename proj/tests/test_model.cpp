#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>

#include "doctest.h"
#include "gradcheck.hpp"
#include "stib/linalg.hpp"
#include "stib/model.hpp"

using namespace stib;
using stib::testing::finite_diff_check;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -2.0,
                     double hi = 2.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

TrainConfig tiny_config(Mode mode) {
  TrainConfig cfg;
  cfg.d_x = 2;
  cfg.d_y = 2;
  cfg.d_z0 = 2;
  cfg.d_z1 = 1;
  cfg.hidden_layers = 1;
  cfg.hidden_width = 4;
  cfg.batch_size = 16;
  cfg.mode = mode;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("encode basics") {
  TrainConfig cfg = tiny_config(Mode::stib);
  {
    // Zero weights and biases: both halves vanish.
    Rng rng(1);
    MlpParams enc = make_mlp(2, 6, 1, 4, Activation::tanh, rng);
    for (MlpLayer& l : enc.layers) {
      for (double& v : l.w.data) v = 0.0;
      for (double& v : l.b.data) v = 0.0;
    }
    Matrix mu, lv;
    encode(enc, Matrix(3, 2), mu, lv);
    CHECK(max_abs(mu) == 0.0);
    CHECK(max_abs(lv) == 0.0);
  }
  {
    // Single linear identity layer: mu||logvar echoes the input.
    Rng rng(1);
    MlpParams enc = make_mlp(6, 6, 0, 0, Activation::tanh, rng);
    enc.layers[0].w = Matrix::identity(6);
    enc.layers[0].b = Matrix(1, 6);
    Matrix x(2, 6);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      x.data[i] = 0.25 * static_cast<double>(i) - 1.0;
    Matrix mu, lv;
    encode(enc, x, mu, lv);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(mu(i, j) == x(i, j));
        CHECK(lv(i, j) == x(i, j + 3));
      }
  }
  {
    // Random parameters: finite outputs, logvar within the clamp band.
    Rng rng(77);
    MlpParams enc = make_mlp(2, 6, 2, 8, Activation::tanh, rng);
    // Blow up the last layer so the clamp actually binds.
    for (double& v : enc.layers.back().w.data) v *= 100.0;
    Matrix mu, lv;
    encode(enc, random_matrix(rng, 32, 2, -4.0, 4.0), mu, lv);
    CHECK(all_finite(mu));
    for (double v : lv.data) {
      CHECK(v <= 10.0);
      CHECK(v >= -10.0);
    }
  }
}

TEST_CASE("reparameterize") {
  const Matrix mu = {{1.0, 2.0}};
  const Matrix zeros(1, 2);
  CHECK(reparameterize(mu, zeros, zeros).data == mu.data);

  const Matrix noise = {{1.0, -1.0}};
  const Matrix z = reparameterize(mu, zeros, noise);
  CHECK(z(0, 0) == 2.0);
  CHECK(z(0, 1) == 1.0);

  const Matrix lv = {{2.0 * std::log(2.0), 0.0}};
  const Matrix z2 = reparameterize(Matrix(1, 2), lv, Matrix(1, 2, 1.0));
  CHECK(z2(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(z2(0, 1) == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(reparameterize(mu, zeros, Matrix(2, 2)), ShapeError);
}

TEST_CASE("split_latent") {
  const Matrix z = {{1.0, 2.0, 3.0}};
  auto [z0, z1] = split_latent(z, 2);
  CHECK(z0.cols == 2);
  CHECK(z1.cols == 1);
  CHECK(z1(0, 0) == 3.0);

  auto [e0, e1] = split_latent(z, 0);
  CHECK(e0.cols == 0);
  CHECK(e1.data == z.data);

  CHECK(concat_cols(z0, z1).data == z.data);
  CHECK_THROWS_AS(split_latent(z, 4), ShapeError);

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = random_matrix(rng, 4, 5);
    const std::size_t d0 = static_cast<std::size_t>(rng.next_u64() % 6);
    auto [a, b] = split_latent(m, d0);
    CHECK(concat_cols(a, b).data == m.data);
  }
}

TEST_CASE("kl_std_normal") {
  CHECK(kl_std_normal(Matrix(4, 3), Matrix(4, 3)) == 0.0);
  CHECK(kl_std_normal(Matrix(1, 1, 1.0), Matrix(1, 1)) == doctest::Approx(0.5));
  const double expected = 0.5 * (2.0 - 1.0 - std::log(2.0));
  CHECK(kl_std_normal(Matrix(1, 1), Matrix(1, 1, std::log(2.0))) ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.153426).epsilon(1e-5));

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix mu = random_matrix(rng, 8, 3, -3.0, 3.0);
    const Matrix lv = random_matrix(rng, 8, 3, -5.0, 5.0);
    CHECK(kl_std_normal(mu, lv) >= 0.0);
  }
}

TEST_CASE("gaussian_corr_mi examples") {
  {
    // Exactly orthogonal columns: block-diagonal correlation, MI = 0.
    const Matrix z0 = {{1.0}, {1.0}, {-1.0}, {-1.0}};
    const Matrix y = {{1.0}, {-1.0}, {1.0}, {-1.0}};
    const auto [mi, st] = gaussian_corr_mi(z0, y, 1e-5);
    CHECK(std::fabs(mi) <= 1e-9);
    CHECK(st.r_joint(0, 1) == 0.0);
  }
  {
    // Sample correlation exactly 0.5 by construction.
    const double s3 = std::sqrt(3.0) / 2.0;
    Matrix z0(4, 1), y(4, 1);
    const double a[4] = {1.0, -1.0, 1.0, -1.0};
    const double b[4] = {1.0, 1.0, -1.0, -1.0};
    for (int i = 0; i < 4; ++i) {
      z0(i, 0) = a[i];
      y(i, 0) = 0.5 * a[i] + s3 * b[i];
    }
    const auto [mi, st] = gaussian_corr_mi(z0, y, 0.0);
    CHECK(st.r_joint(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mi == doctest::Approx(-0.5 * std::log(0.75)).epsilon(1e-12));
    CHECK(mi == doctest::Approx(0.143841).epsilon(1e-5));
  }
  CHECK_THROWS_AS(gaussian_corr_mi(Matrix(3, 2), Matrix(3, 2), 0.0), ShapeError);
}

TEST_CASE("gaussian_corr_mi affine invariance") {
  Rng rng(21);
  const Matrix z0 = random_matrix(rng, 64, 2, -1.0, 1.0);
  const Matrix y = random_matrix(rng, 64, 2, -1.0, 1.0);
  const double base = gaussian_corr_mi(z0, y, 1e-5).first;
  CHECK(base >= -1e-9);

  // Power-of-two scalings and sign flips reproduce the value bit for bit.
  for (const double s : {2.0, 0.25, -4.0, -1.0}) {
    Matrix ys = y;
    for (std::size_t i = 0; i < ys.rows; ++i) {
      ys(i, 0) *= s;
      ys(i, 1) *= -8.0 * s;
    }
    CHECK(gaussian_corr_mi(z0, ys, 1e-5).first == base);
  }

  // General per-dimension affine maps agree to rounding.
  for (const auto& [a0, a1, b0, b1] :
       {std::tuple{10.0, 3.0, 5.0, -2.0}, std::tuple{-0.3, 7.7, 0.1, 9.0}}) {
    Matrix ys = y;
    for (std::size_t i = 0; i < ys.rows; ++i) {
      ys(i, 0) = a0 * ys(i, 0) + b0;
      ys(i, 1) = a1 * ys(i, 1) + b1;
    }
    CHECK(std::fabs(gaussian_corr_mi(z0, ys, 1e-5).first - base) <= 1e-12);
  }

  // Same story on the z0 side.
  Matrix zs = z0;
  for (double& v : zs.data) v *= 0.5;
  CHECK(gaussian_corr_mi(zs, y, 1e-5).first == base);
}

TEST_CASE("gaussian_corr_mi nonnegativity") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix z0 = random_matrix(rng, 40, 2, -1.0, 1.0);
    Matrix y = random_matrix(rng, 40, 2, -1.0, 1.0);
    if (trial % 3 == 0) {
      // Correlated case: mix z0 into y.
      for (std::size_t i = 0; i < y.rows; ++i)
        y(i, 0) += 0.8 * z0(i, 0);
    }
    CHECK(gaussian_corr_mi(z0, y, 1e-5).first >= -1e-9);
  }
}

TEST_CASE("tape gaussian MI agrees with the plain route") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix z0 = random_matrix(rng, 32, 2, -1.5, 1.5);
    const Matrix y = random_matrix(rng, 32, 2, -1.5, 1.5);
    Tape t;
    const Tape::Id mi_node =
        graph::gaussian_mi(t, t.constant(z0), t.constant(y), 1e-5);
    const double plain = gaussian_corr_mi(z0, y, 1e-5).first;
    CHECK(t.value(mi_node)(0, 0) == doctest::Approx(plain).epsilon(1e-10));
  }
}

TEST_CASE("loss_main composition") {
  TrainConfig cfg = tiny_config(Mode::stib);
  Rng rng(cfg.seed);
  StibParams params = StibParams::init(cfg, rng);
  const Matrix x = random_matrix(rng, cfg.batch_size, 2, -4.0, 4.0);
  const Matrix y = random_matrix(rng, cfg.batch_size, 2, -2.0, 2.0);
  Matrix noise(cfg.batch_size, cfg.d_z());
  for (double& v : noise.data) v = rng.normal();

  {
    // lambda = 0 reduces the loss to the KL term exactly.
    TrainConfig c0 = cfg;
    c0.lambda = 0.0;
    const LossGraph g = build_loss_main(params, x, y, noise, c0);
    CHECK(g.parts.total == g.parts.kl);
  }
  {
    // Ablation drops the MI term and never touches the bijection.
    TrainConfig cna = cfg;
    cna.mode = Mode::stib_no_adv;
    const LossGraph g = build_loss_main(params, x, y, noise, cna);
    CHECK(g.parts.mi == 0.0);
    const double expected =
        g.parts.kl + cna.lambda * (g.parts.mse_x + g.parts.mse_y);
    CHECK(g.parts.total == doctest::Approx(expected).epsilon(1e-12));
  }
  {
    const LossGraph g = build_loss_main(params, x, y, noise, cfg);
    const double expected =
        g.parts.kl + cfg.lambda * (g.parts.mse_x + g.parts.mse_y + g.parts.mi);
    CHECK(g.parts.total == doctest::Approx(expected).epsilon(1e-12));
    CHECK(g.parts.mi >= -1e-9);
  }
}

TEST_CASE("loss_adversary composition") {
  TrainConfig cfg = tiny_config(Mode::stib);
  Rng rng(cfg.seed);
  StibParams params = StibParams::init(cfg, rng);
  const Matrix x = random_matrix(rng, cfg.batch_size, 2, -4.0, 4.0);
  const Matrix y = random_matrix(rng, cfg.batch_size, 2, -2.0, 2.0);
  Matrix noise(cfg.batch_size, cfg.d_z());
  for (double& v : noise.data) v = rng.normal();

  // Freshly initialized bijection nets are the identity, so the cycle term
  // vanishes and with beta = 0 the loss is exactly -MI(z0, y).
  {
    const Matrix ytilde = mlp_forward(params.bij_forward, y);
    CHECK(ytilde.data == y.data);
    const Matrix ycycle = mlp_forward(params.bij_inverse, ytilde);
    CHECK(ycycle.data == y.data);
  }
  TrainConfig c0 = cfg;
  c0.beta = 0.0;
  const LossGraph g0 = build_loss_adversary(params, x, y, noise, c0);
  CHECK(g0.parts.cycle == 0.0);

  Matrix mu, lv;
  encode(params.encoder, x, mu, lv);
  const Matrix z0 = slice_cols(reparameterize(mu, lv, noise), 0, cfg.d_z0);
  const double mi_direct = gaussian_corr_mi(z0, y, cfg.jitter).first;
  CHECK(g0.parts.total == doctest::Approx(-mi_direct).epsilon(1e-10));

  // One small gradient step on the bijection strictly decreases the loss
  // on the same batch.
  LossGraph g = build_loss_adversary(params, x, y, noise, cfg);
  const double before = g.parts.total;
  g.tape.backward(g.loss);
  const double eta = 1e-4;
  for (const ParamBinding& pb : g.trainable) {
    const Matrix& grad = g.tape.adjoint(pb.node);
    for (std::size_t i = 0; i < pb.target->data.size(); ++i)
      pb.target->data[i] -= eta * grad.data[i];
  }
  const double after = loss_adversary(params, x, y, noise, cfg);
  CHECK(after < before);
}

TEST_CASE("parameter freezing between the two objectives") {
  TrainConfig cfg = tiny_config(Mode::stib);
  Rng rng(cfg.seed);
  StibParams params = StibParams::init(cfg, rng);
  const Matrix x = random_matrix(rng, cfg.batch_size, 2, -4.0, 4.0);
  const Matrix y = random_matrix(rng, cfg.batch_size, 2, -2.0, 2.0);
  Matrix noise(cfg.batch_size, cfg.d_z());
  for (double& v : noise.data) v = rng.normal();

  {
    LossGraph g = build_loss_main(params, x, y, noise, cfg);
    g.tape.backward(g.loss);
    const auto adversary = params.adversary_group();
    for (const ParamBinding& pb : g.trainable)
      for (Matrix* frozen : adversary) CHECK(pb.target != frozen);
    // Encoder parameters do receive gradient.
    bool encoder_touched = false;
    for (const ParamBinding& pb : g.trainable)
      if (max_abs(g.tape.adjoint(pb.node)) > 0.0) encoder_touched = true;
    CHECK(encoder_touched);
  }
  {
    LossGraph g = build_loss_adversary(params, x, y, noise, cfg);
    g.tape.backward(g.loss);
    const auto main = params.main_group();
    for (const ParamBinding& pb : g.trainable)
      for (Matrix* frozen : main) CHECK(pb.target != frozen);
  }
}

TEST_CASE("end-to-end loss gradients match finite differences") {
  // Tiny model: widths <= 4, batch 16, both losses within 1e-3 relative.
  TrainConfig cfg = tiny_config(Mode::stib);
  Rng rng(123);
  StibParams params = StibParams::init(cfg, rng);
  const Matrix x = random_matrix(rng, cfg.batch_size, 2, -2.0, 2.0);
  const Matrix y = random_matrix(rng, cfg.batch_size, 2, -2.0, 2.0);
  Matrix noise(cfg.batch_size, cfg.d_z());
  for (double& v : noise.data) v = rng.normal();

  auto check_loss = [&](bool main_loss) {
    LossGraph g = main_loss ? build_loss_main(params, x, y, noise, cfg)
                            : build_loss_adversary(params, x, y, noise, cfg);
    g.tape.backward(g.loss);
    for (const ParamBinding& pb : g.trainable) {
      const Matrix analytic = g.tape.adjoint(pb.node);
      Matrix* target = pb.target;
      const auto res = finite_diff_check(
          [&](const Matrix& probe) {
            const Matrix saved = *target;
            *target = probe;
            const double v = main_loss ? loss_main(params, x, y, noise, cfg)
                                       : loss_adversary(params, x, y, noise, cfg);
            *target = saved;
            return v;
          },
          *target, analytic, 1e-5);
      INFO("loss ", main_loss ? "main" : "adversary", " worst rel err ",
           res.worst_rel);
      CHECK(res.worst_rel < 1e-3);
    }
  };
  check_loss(true);
  check_loss(false);
}
