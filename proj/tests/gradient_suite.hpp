#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "sdr/nn.hpp"

namespace testing {

using sdr::nn::Index;
using Mat = sdr::nn::Matrix<double>;
using Vec = sdr::nn::RowVector<double>;

inline constexpr double kFdStep = 1e-5;

// ||a - n|| / (||a|| + ||n||) over one parameter array, with n from central
// differences of `loss` around each entry of `data`.
template <typename Derived>
double fd_error(const std::function<double()>& loss, Eigen::PlainObjectBase<Derived>& param,
                const Eigen::PlainObjectBase<Derived>& analytic) {
  double diff = 0, na = 0, nn = 0;
  for (Index i = 0; i < param.size(); ++i) {
    const double keep = param.data()[i];
    param.data()[i] = keep + kFdStep;
    const double up = loss();
    param.data()[i] = keep - kFdStep;
    const double down = loss();
    param.data()[i] = keep;
    const double num = (up - down) / (2 * kFdStep);
    const double a = analytic.data()[i];
    diff += (a - num) * (a - num);
    na += a * a;
    nn += num * num;
  }
  const double denom = std::sqrt(na) + std::sqrt(nn);
  return denom < 1e-300 ? 0.0 : std::sqrt(diff) / denom;
}

inline Mat randn(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline double weighted(const Mat& y, const Mat& r) { return (y.array() * r.array()).sum(); }

// Worst relative error per layer over `configs` random configurations.
inline std::map<std::string, double> run_gradient_suite(int configs, std::uint64_t seed) {
  using namespace sdr::nn;
  std::map<std::string, double> worst;
  auto note = [&](const std::string& k, double e) {
    if (!(e <= worst[k])) worst[k] = e;
  };
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> small(1, 4);

  for (int cfg = 0; cfg < configs; ++cfg) {
    // LSTM, with and without a recurrent dropout mask
    {
      const Index B = small(rng), T = small(rng) + 1, in = small(rng) + 1, u = small(rng);
      sdr::Rng prng(rng());
      LstmParams<double> p = lstm_init<double>(in, u, prng);
      p.b += randn(1, 4 * u, rng, 0.3);
      Mat x = randn(T * B, in, rng), h0 = randn(B, u, rng, 0.5), c0 = randn(B, u, rng, 0.5);
      const Mat r = randn(T * B, u, rng);
      Mat mask;
      const bool masked = cfg % 2 == 1;
      if (masked) mask = dropout_mask<double>(B, u, 0.3, prng);
      const Mat* mp = masked ? &mask : nullptr;
      auto loss = [&] { return weighted(lstm_forward(p, x, B, h0, c0, mp), r); };
      LstmCache<double> cache;
      lstm_forward(p, x, B, h0, c0, mp, &cache);
      const auto g = lstm_backward(p, cache, r);
      const std::string tag = "lstm";
      note(tag + ".W", fd_error<Mat>(loss, p.W, g.W));
      note(tag + ".U", fd_error<Mat>(loss, p.U, g.U));
      note(tag + ".b", fd_error<Vec>(loss, p.b, g.b));
      note(tag + ".x", fd_error<Mat>(loss, x, g.x));
      note(tag + ".h0", fd_error<Mat>(loss, h0, g.h0));
      note(tag + ".c0", fd_error<Mat>(loss, c0, g.c0));
    }
    // Dense with every activation
    for (Activation act : {Activation::Identity, Activation::Tanh, Activation::Sigmoid, Activation::Softmax}) {
      const Index B = small(rng), in = small(rng) + 1, out = small(rng) + 1;
      DenseParams<double> p{randn(in, out, rng), randn(1, out, rng), act};
      Mat x = randn(B, in, rng);
      const Mat r = randn(B, out, rng);
      auto loss = [&] { return weighted(dense_forward(p, x), r); };
      DenseCache<double> cache;
      dense_forward(p, x, &cache);
      const auto g = dense_backward(p, cache, r);
      const char* names[] = {"dense.identity", "dense.tanh", "dense.sigmoid", "dense.softmax"};
      const std::string tag = names[static_cast<int>(act)];
      note(tag, fd_error<Mat>(loss, p.W, g.W));
      note(tag, fd_error<Vec>(loss, p.b, g.b));
      note(tag, fd_error<Mat>(loss, x, g.x));
    }
    // Batch norm, both modes
    for (Mode mode : {Mode::Train, Mode::Infer}) {
      const Index n = small(rng) + 2, f = small(rng);
      BatchNormParams<double> p = BatchNormParams<double>::identity(f);
      p.gamma = randn(1, f, rng) ;
      p.beta = randn(1, f, rng);
      p.running_mean = randn(1, f, rng);
      p.running_var = randn(1, f, rng).cwiseAbs().array() + 0.1;
      Mat x = randn(n, f, rng, 2.0);
      const Mat r = randn(n, f, rng);
      auto loss = [&] {
        BatchNormParams<double> copy = p;
        return weighted(batchnorm_forward(copy, x, mode), r);
      };
      BatchNormParams<double> copy = p;
      BatchNormCache<double> cache;
      batchnorm_forward(copy, x, mode, &cache);
      const auto g = batchnorm_backward(p, cache, r);
      const std::string tag = mode == Mode::Train ? "batchnorm.train" : "batchnorm.infer";
      note(tag, fd_error<Vec>(loss, p.gamma, g.gamma));
      note(tag, fd_error<Vec>(loss, p.beta, g.beta));
      note(tag, fd_error<Mat>(loss, x, g.x));
    }
    // RMSE loss
    {
      const Index B = small(rng), k = small(rng) + 1;
      Mat pred = randn(B, k, rng);
      const Mat target = randn(B, k, rng);
      auto loss = [&] { return rmse_loss(pred, target).loss; };
      const auto res = rmse_loss(pred, target);
      note("rmse_loss", fd_error<Mat>(loss, pred, res.grad));
    }
    // L1 penalty on entries away from zero
    {
      Vec b = randn(1, small(rng) * 4, rng);
      for (Index i = 0; i < b.size(); ++i)
        if (std::abs(b[i]) < 0.01) b[i] = 0.5;
      const double lambda = 0.001;
      auto loss = [&] { return l1_penalty(b, lambda).penalty; };
      note("l1_penalty", fd_error<Vec>(loss, b, l1_penalty(b, lambda).grad));
    }
  }
  return worst;
}

}  // namespace testing
