#include <doctest.h>

#include "gradient_suite.hpp"
#include "sdr/errors.hpp"
#include "sdr/nn.hpp"

using namespace sdr;
using namespace sdr::nn;
using testing::Mat;
using testing::Vec;

TEST_CASE("gradient suite: every layer passes central differences") {
  const auto worst = testing::run_gradient_suite(12, 31337);
  for (const auto& [layer, err] : worst) {
    CAPTURE(layer);
    CHECK(err < 1e-4);
  }
  CHECK(worst.size() == 14);
}

TEST_CASE("glorot uniform") {
  Rng rng(3);
  const auto w = glorot_uniform<double>(40, 160, rng);
  const double bound = std::sqrt(6.0 / 200.0);
  CHECK(bound == doctest::Approx(0.17321).epsilon(1e-4));
  CHECK(w.cwiseAbs().maxCoeff() <= bound);
  const auto big = glorot_uniform<double>(400, 250, rng);
  CHECK(std::abs(big.mean()) < 0.01);
  Rng a(9), b(9);
  CHECK(glorot_uniform<float>(5, 7, a) == glorot_uniform<float>(5, 7, b));
  CHECK_THROWS_AS(glorot_uniform<double>(0, 3, rng), ArgumentError);
}

TEST_CASE("hard sigmoid") {
  CHECK(hard_sigmoid(0.0) == 0.5);
  CHECK(hard_sigmoid(2.5) == 1.0);
  CHECK(hard_sigmoid(-2.5) == 0.0);
  CHECK(hard_sigmoid(10.0) == 1.0);
  for (double x : {-4.0, -2.0, -0.7, 0.3, 1.9, 3.3}) {
    const double num = (hard_sigmoid(x + 1e-6) - hard_sigmoid(x - 1e-6)) / 2e-6;
    CHECK(hard_sigmoid_grad(x) == doctest::Approx(num).epsilon(1e-6));
  }
}

TEST_CASE("lstm forward semantics") {
  LstmParams<double> zero{Mat::Zero(3, 8), Mat::Zero(2, 8), Vec::Zero(8)};
  const Mat h = lstm_forward(zero, Mat::Zero(6, 3), 2, Mat(), Mat(), nullptr);
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);

  // f saturated at 1, i at 0: the cell keeps c0
  LstmParams<double> carry{Mat::Zero(1, 8), Mat::Zero(2, 8), Vec::Zero(8)};
  carry.b.segment(0, 2).setConstant(-10);
  carry.b.segment(2, 2).setConstant(10);
  carry.b.segment(6, 2).setConstant(10);
  std::mt19937_64 g(4);
  const Mat c0 = testing::randn(1, 2, g);
  LstmCache<double> cache;
  lstm_forward(carry, testing::randn(5, 1, g), 1, Mat::Zero(1, 2), c0, nullptr, &cache);
  for (Index t = 0; t < 5; ++t) CHECK((cache.c.row(t) - c0).cwiseAbs().maxCoeff() == 0.0);

  // scalar-loop oracle, units=2, T=3, batch=1
  Rng rng(12);
  LstmParams<double> p = lstm_init<double>(3, 2, rng);
  p.b += testing::randn(1, 8, g, 0.3);
  const Mat x = testing::randn(3, 3, g);
  const Mat out = lstm_forward(p, x, 1, Mat(), Mat(), nullptr);
  double hs[2] = {0, 0}, cs[2] = {0, 0};
  auto hsig = [](double v) { return std::min(1.0, std::max(0.0, 0.2 * v + 0.5)); };
  for (int t = 0; t < 3; ++t) {
    double z[8];
    for (int j = 0; j < 8; ++j) {
      z[j] = p.b[j];
      for (int k = 0; k < 3; ++k) z[j] += x(t, k) * p.W(k, j);
      for (int k = 0; k < 2; ++k) z[j] += hs[k] * p.U(k, j);
    }
    for (int k = 0; k < 2; ++k) {
      const double i = hsig(z[k]), f = hsig(z[2 + k]), c = std::tanh(z[4 + k]), o = hsig(z[6 + k]);
      cs[k] = f * cs[k] + i * c;
      hs[k] = o * std::tanh(cs[k]);
    }
    for (int k = 0; k < 2; ++k) CHECK(out(t, k) == doctest::Approx(hs[k]).epsilon(1e-12));
  }
  CHECK(p.b.segment(2, 2) != Vec::Zero(2));
  CHECK_THROWS_AS(lstm_forward(p, Mat::Zero(4, 2), 1, Mat(), Mat(), nullptr), ShapeError);
  CHECK_THROWS_AS(lstm_forward(p, Mat::Zero(5, 3), 2, Mat(), Mat(), nullptr), ShapeError);
}

TEST_CASE("lstm init sets forget bias") {
  Rng rng(1);
  const auto p = lstm_init<float>(60, 40, rng);
  CHECK(p.b.segment(40, 40).isOnes());
  CHECK(p.b.segment(0, 40).isZero());
  CHECK(p.b.segment(80, 80).isZero());
}

TEST_CASE("lstm backward edge cases") {
  Rng rng(5);
  std::mt19937_64 g(5);
  const auto p = lstm_init<double>(3, 4, rng);
  const Mat x = testing::randn(10, 3, g);
  LstmCache<double> cache;
  lstm_forward(p, x, 2, Mat(), Mat(), nullptr, &cache);
  const auto zero = lstm_backward(p, cache, Mat::Zero(10, 4));
  CHECK(zero.W.isZero());
  CHECK(zero.U.isZero());
  CHECK(zero.b.isZero());

  // upstream gradient only at t=0,1: later inputs receive nothing
  Mat dh = Mat::Zero(10, 4);
  dh.topRows(4) = testing::randn(4, 4, g);
  const auto early = lstm_backward(p, cache, dh);
  CHECK(early.x.bottomRows(6).isZero());
  CHECK(!early.x.topRows(4).isZero());
}

TEST_CASE("dense forward") {
  DenseParams<double> id{Mat::Identity(4, 4), Vec::Zero(4), Activation::Identity};
  std::mt19937_64 g(2);
  const Mat x = testing::randn(3, 4, g);
  CHECK(dense_forward(id, x) == x);
  const Mat eq = activate<double>(Mat::Constant(2, 24, 0.7), Activation::Softmax);
  CHECK((eq.array() - 1.0 / 24).abs().maxCoeff() < 1e-15);
  const Mat sm = activate<double>(testing::randn(5, 8, g, 4), Activation::Softmax);
  CHECK((sm.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-6);
  const Mat sg = activate<double>(testing::randn(5, 8, g, 4), Activation::Sigmoid);
  CHECK(sg.minCoeff() > 0);
  CHECK(sg.maxCoeff() < 1);
  CHECK_THROWS_AS(dense_forward(id, Mat::Zero(2, 3)), ShapeError);
}

TEST_CASE("batch norm") {
  std::mt19937_64 g(6);
  auto p = BatchNormParams<double>::identity(5);
  const Mat x = testing::randn(50, 5, g, 3.0).array() + 2.0;
  const Mat y = batchnorm_forward(p, x, Mode::Train);
  CHECK(y.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  const Vec var = y.array().square().colwise().mean();
  for (Index c = 0; c < 5; ++c) CHECK(var[c] == doctest::Approx(1.0).epsilon(1e-3));
  const Vec mean = x.colwise().mean();
  CHECK((p.running_mean - 0.01 * mean).cwiseAbs().maxCoeff() < 1e-12);

  auto fresh = BatchNormParams<double>::identity(5);
  const Mat inf = batchnorm_forward(fresh, x, Mode::Infer);
  CHECK((inf - x / std::sqrt(1.0 + 1e-3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(batchnorm_infer(fresh, x) == inf);
  CHECK_THROWS_AS(batchnorm_forward(fresh, Mat::Zero(1, 5), Mode::Train), ArgumentError);
}

TEST_CASE("dropout") {
  Rng rng(7);
  std::mt19937_64 g(7);
  const Mat x = testing::randn(30, 30, g);
  CHECK(dropout(x, 0.0, rng, Mode::Train) == x);
  CHECK(dropout(x, 0.5, rng, Mode::Infer) == x);
  const auto m = dropout_mask<float>(1000, 1000, 0.2, rng);
  const double kept = static_cast<double>((m.array() > 0).count()) / 1e6;
  CHECK(std::abs(kept - 0.8) < 0.005);
  CHECK(m.maxCoeff() == doctest::Approx(1.25));
  CHECK_THROWS_AS(dropout_mask<float>(2, 2, 1.0, rng), ArgumentError);
}

TEST_CASE("rmse loss and l1 penalty") {
  const Mat t = Mat::Identity(3, 3);
  const auto same = rmse_loss<double>(t, t);
  CHECK(same.loss == 0.0);
  CHECK(same.grad.isZero());
  Mat a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  CHECK(rmse_loss<double>(a, b).loss == doctest::Approx(1.0));
  CHECK_THROWS_AS(rmse_loss<double>(a, t), ShapeError);

  CHECK(l1_penalty<double>(Vec::Zero(4), 0.001).penalty == 0.0);
  Vec bias(2);
  bias << 1, -2;
  const auto l1 = l1_penalty(bias, 0.001);
  CHECK(l1.penalty == doctest::Approx(0.003));
  CHECK(l1.grad[0] == 0.001);
  CHECK(l1.grad[1] == -0.001);
  CHECK(l1_penalty<double>(Vec::Zero(1), 0.001).grad[0] == 0.0);
}

TEST_CASE("adam") {
  Adam<double> opt;
  std::vector<double> w{1.0, -2.0, 0.5}, g{0.3, -0.01, 0.0};
  ParamBlock<double> blk{w, g};
  opt.step(std::span<const ParamBlock<double>>(&blk, 1), 1e-3);
  CHECK(w[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(w[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-9));
  CHECK(w[2] == 0.5);
  CHECK(opt.steps() == 1);

  std::vector<double> z{0.25}, zg{0.0};
  Adam<double> idle;
  ParamBlock<double> zb{z, zg};
  idle.step(std::span<const ParamBlock<double>>(&zb, 1), 1e-3);
  CHECK(z[0] == 0.25);
  CHECK(idle.steps() == 1);

  // 200 steps on sum(w^2) from w = 1
  std::vector<double> q(4, 1.0), qg(4);
  Adam<double> quad;
  ParamBlock<double> qb{q, qg};
  for (int i = 0; i < 200; ++i) {
    for (int k = 0; k < 4; ++k) qg[k] = 2 * q[k];
    quad.step(std::span<const ParamBlock<double>>(&qb, 1), 0.1);
  }
  for (double v : q) CHECK(std::abs(v) < 1e-2);

  // decay: lr_t = lr / (1 + decay * t)
  AdamConfig cfg;
  cfg.decay = 0.5;
  Adam<double> dec(cfg);
  std::vector<double> d{0.0}, dg{1.0};
  ParamBlock<double> db{d, dg};
  dec.step(std::span<const ParamBlock<double>>(&db, 1), 1.0);
  dec.step(std::span<const ParamBlock<double>>(&db, 1), 1.0);
  CHECK(d[0] == doctest::Approx(-1.0 - 1.0 / 1.5).epsilon(1e-6));
}

TEST_CASE("plateau scheduler") {
  PlateauScheduler s;
  for (int e = 0; e < 20; ++e) CHECK(s.step(1.0 - 0.01 * e) == 1e-3);
  PlateauScheduler flat;
  flat.step(1.0);
  for (int e = 0; e < 4; ++e) CHECK(flat.step(1.0) == 1e-3);
  CHECK(flat.step(1.0) == doctest::Approx(1e-4));
  for (int e = 0; e < 1000; ++e) flat.step(1.0);
  CHECK(flat.lr == 1e-10);
  PlateauScheduler tiny;
  tiny.step(1.0);
  for (int e = 0; e < 5; ++e) tiny.step(1.0 - 5e-5);
  CHECK(tiny.lr == doctest::Approx(1e-4));
}
