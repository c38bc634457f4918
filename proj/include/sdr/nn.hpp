#pragma once

// Dense, LSTM and batch-norm layers with exact backward passes, plus the
// loss, regularizer and optimizer pieces the model trains with.
//
// Everything is templated on the scalar type: the model trains in float,
// gradient checks instantiate double. A sequence batch is one matrix of
// steps*batch rows stored time-major: rows [t*batch, (t+1)*batch) hold step t.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "sdr/errors.hpp"
#include "sdr/rng.hpp"

namespace sdr::nn {

using Eigen::Index;

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

enum class Mode { Train, Infer };
enum class Activation { Identity, Tanh, Sigmoid, Softmax };

// ---------------------------------------------------------------------------
// Elementwise pieces

template <typename S>
S hard_sigmoid(S x) {
  return std::clamp(S(0.2) * x + S(0.5), S(0), S(1));
}

/// 0.2 strictly inside (-2.5, 2.5), 0 outside.
template <typename S>
S hard_sigmoid_grad(S x) {
  return (x > S(-2.5) && x < S(2.5)) ? S(0.2) : S(0);
}

template <typename S>
Matrix<S> glorot_uniform(Index in_dim, Index out_dim, Rng& rng) {
  if (in_dim < 1 || out_dim < 1) throw ArgumentError("glorot_uniform needs positive dims");
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  std::uniform_real_distribution<double> draw(-bound, bound);
  Matrix<S> w(in_dim, out_dim);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(draw(rng));
  return w;
}

template <typename S>
Matrix<S> activate(const Matrix<S>& z, Activation act) {
  switch (act) {
    case Activation::Identity:
      return z;
    case Activation::Tanh:
      return z.array().tanh().matrix();
    case Activation::Sigmoid:
      return (S(1) / (S(1) + (-z.array()).exp())).matrix();
    case Activation::Softmax: {
      Matrix<S> y = (z.colwise() - z.rowwise().maxCoeff()).array().exp().matrix();
      y.array().colwise() /= y.rowwise().sum().array();
      return y;
    }
  }
  return z;
}

/// dL/dz from dL/dy given the activation output y.
template <typename S>
Matrix<S> activate_backward(const Matrix<S>& y, const Matrix<S>& dy, Activation act) {
  switch (act) {
    case Activation::Identity:
      return dy;
    case Activation::Tanh:
      return (dy.array() * (S(1) - y.array().square())).matrix();
    case Activation::Sigmoid:
      return (dy.array() * y.array() * (S(1) - y.array())).matrix();
    case Activation::Softmax: {
      const auto dot = (dy.array() * y.array()).rowwise().sum();
      return (y.array() * (dy.array().colwise() - dot)).matrix();
    }
  }
  return dy;
}

// ---------------------------------------------------------------------------
// Dense

template <typename S>
struct DenseParams {
  Matrix<S> W;  // in x out
  RowVector<S> b;
  Activation act = Activation::Identity;
};

template <typename S>
struct DenseCache {
  Matrix<S> x;
  Matrix<S> y;
};

template <typename S>
struct DenseGrads {
  Matrix<S> W;
  RowVector<S> b;
  Matrix<S> x;
};

template <typename S>
Matrix<S> dense_forward(const DenseParams<S>& p, const std::type_identity_t<Matrix<S>>& x, DenseCache<S>* cache = nullptr) {
  if (x.cols() != p.W.rows())
    throw ShapeError("dense input width " + std::to_string(x.cols()) + " != " +
                     std::to_string(p.W.rows()));
  Matrix<S> z = x * p.W;
  z.rowwise() += p.b;
  Matrix<S> y = activate(z, p.act);
  if (cache) {
    cache->x = x;
    cache->y = y;
  }
  return y;
}

template <typename S>
DenseGrads<S> dense_backward(const DenseParams<S>& p, const DenseCache<S>& cache, const std::type_identity_t<Matrix<S>>& dy) {
  if (dy.rows() != cache.y.rows() || dy.cols() != cache.y.cols())
    throw ShapeError("dense upstream gradient shape mismatch");
  const Matrix<S> dz = activate_backward(cache.y, dy, p.act);
  DenseGrads<S> g;
  g.W = cache.x.transpose() * dz;
  g.b = dz.colwise().sum();
  g.x = dz * p.W.transpose();
  return g;
}

// ---------------------------------------------------------------------------
// LSTM
//
// Gate blocks along the 4*units axis: input, forget, cell candidate, output.
// i, f, o use the hard sigmoid; the candidate and the cell output use tanh.

template <typename S>
struct LstmParams {
  Matrix<S> W;  // in x 4u
  Matrix<S> U;  // u x 4u
  RowVector<S> b;

  Index units() const { return U.rows(); }
  Index input_dim() const { return W.rows(); }
};

template <typename S>
struct LstmCache {
  Index batch = 0;
  Index steps = 0;
  Matrix<S> x;      // TB x in
  Matrix<S> pre;    // TB x 4u, gate pre-activations
  Matrix<S> gates;  // TB x 4u, activated gates
  Matrix<S> c;      // TB x u
  Matrix<S> h;      // TB x u
  Matrix<S> h0, c0;
  Matrix<S> mask;   // B x u, empty when no recurrent dropout
};

template <typename S>
struct LstmGrads {
  Matrix<S> W, U;
  RowVector<S> b;
  Matrix<S> x;
  Matrix<S> h0, c0;
};

template <typename S>
LstmParams<S> lstm_init(Index in_dim, Index units, Rng& rng) {
  LstmParams<S> p;
  p.W = glorot_uniform<S>(in_dim, 4 * units, rng);
  p.U = glorot_uniform<S>(units, 4 * units, rng);
  p.b = RowVector<S>::Zero(4 * units);
  p.b.segment(units, units).setOnes();  // forget gate
  return p;
}

/// `x` is steps*batch x in_dim (time-major). `h0`/`c0` may be empty (zeros).
/// `recurrent_mask`, when non-null, is batch x units and multiplies h_{t-1}
/// wherever it enters the gate pre-activations.
template <typename S>
Matrix<S> lstm_forward(const LstmParams<S>& p, const std::type_identity_t<Matrix<S>>& x, Index batch,
                       const std::type_identity_t<Matrix<S>>& h0, const std::type_identity_t<Matrix<S>>& c0,
                       const std::type_identity_t<Matrix<S>>* recurrent_mask, LstmCache<S>* cache = nullptr) {
  const Index u = p.units();
  if (p.U.cols() != 4 * u || p.W.cols() != 4 * u || p.b.size() != 4 * u)
    throw ShapeError("inconsistent LSTM parameter shapes");
  if (batch < 1 || x.rows() % batch != 0) throw ShapeError("sequence rows not a multiple of batch");
  if (x.cols() != p.input_dim())
    throw ShapeError("LSTM input width " + std::to_string(x.cols()) + " != " +
                     std::to_string(p.input_dim()));
  auto check_state = [&](const Matrix<S>& s) {
    if (s.size() != 0 && (s.rows() != batch || s.cols() != u)) throw ShapeError("bad initial state shape");
  };
  check_state(h0);
  check_state(c0);
  if (recurrent_mask && (recurrent_mask->rows() != batch || recurrent_mask->cols() != u))
    throw ShapeError("bad recurrent mask shape");

  const Index steps = x.rows() / batch;
  Matrix<S> pre = x * p.W;
  pre.rowwise() += p.b;
  Matrix<S> gates(pre.rows(), pre.cols());
  Matrix<S> cs(x.rows(), u), hs(x.rows(), u);

  Matrix<S> h = h0.size() ? h0 : Matrix<S>::Zero(batch, u);
  Matrix<S> c = c0.size() ? c0 : Matrix<S>::Zero(batch, u);
  for (Index t = 0; t < steps; ++t) {
    auto z = pre.middleRows(t * batch, batch);
    if (recurrent_mask) {
      z.noalias() += (h.array() * recurrent_mask->array()).matrix() * p.U;
    } else {
      z.noalias() += h * p.U;
    }
    auto a = gates.middleRows(t * batch, batch);
    a.leftCols(2 * u) = z.leftCols(2 * u).unaryExpr([](S v) { return hard_sigmoid(v); });
    a.middleCols(2 * u, u) = z.middleCols(2 * u, u).array().tanh().matrix();
    a.rightCols(u) = z.rightCols(u).unaryExpr([](S v) { return hard_sigmoid(v); });
    c = (a.middleCols(u, u).array() * c.array() + a.leftCols(u).array() * a.middleCols(2 * u, u).array())
            .matrix();
    h = (a.rightCols(u).array() * c.array().tanh()).matrix();
    cs.middleRows(t * batch, batch) = c;
    hs.middleRows(t * batch, batch) = h;
  }
  if (cache) {
    cache->batch = batch;
    cache->steps = steps;
    cache->x = x;
    cache->pre = std::move(pre);
    cache->gates = std::move(gates);
    cache->c = std::move(cs);
    cache->h = hs;
    cache->h0 = h0.size() ? h0 : Matrix<S>::Zero(batch, u);
    cache->c0 = c0.size() ? c0 : Matrix<S>::Zero(batch, u);
    cache->mask = recurrent_mask ? *recurrent_mask : Matrix<S>();
  }
  return hs;
}

/// Backpropagation through time. `dh` is the gradient with respect to every
/// output h_t (steps*batch x units).
template <typename S>
LstmGrads<S> lstm_backward(const LstmParams<S>& p, const LstmCache<S>& cache, const std::type_identity_t<Matrix<S>>& dh) {
  const Index u = p.units();
  const Index B = cache.batch;
  if (dh.rows() != cache.h.rows() || dh.cols() != u) throw ShapeError("LSTM upstream gradient shape mismatch");
  const bool masked = cache.mask.size() != 0;

  Matrix<S> dpre(cache.pre.rows(), 4 * u);
  LstmGrads<S> g;
  g.U = Matrix<S>::Zero(u, 4 * u);
  Matrix<S> dh_next = Matrix<S>::Zero(B, u);
  Matrix<S> dc_next = Matrix<S>::Zero(B, u);
  for (Index t = cache.steps - 1; t >= 0; --t) {
    const auto a = cache.gates.middleRows(t * B, B);
    const auto z = cache.pre.middleRows(t * B, B);
    const auto ig = a.leftCols(u).array();
    const auto fg = a.middleCols(u, u).array();
    const auto gg = a.middleCols(2 * u, u).array();
    const auto og = a.rightCols(u).array();
    const Matrix<S> tc = cache.c.middleRows(t * B, B).array().tanh().matrix();
    const Matrix<S>& c_prev_src = cache.c0;
    const auto c_prev = t > 0 ? cache.c.middleRows((t - 1) * B, B) : c_prev_src.middleRows(0, B);

    const Matrix<S> dht = dh.middleRows(t * B, B) + dh_next;
    const Matrix<S> dc = (dht.array() * og * (S(1) - tc.array().square())).matrix() + dc_next;

    auto dz = dpre.middleRows(t * B, B);
    const auto hs_grad = [](S v) { return hard_sigmoid_grad(v); };
    dz.leftCols(u) = (dc.array() * gg * z.leftCols(u).unaryExpr(hs_grad).array()).matrix();
    dz.middleCols(u, u) = (dc.array() * c_prev.array() * z.middleCols(u, u).unaryExpr(hs_grad).array()).matrix();
    dz.middleCols(2 * u, u) = (dc.array() * ig * (S(1) - gg.square())).matrix();
    dz.rightCols(u) = (dht.array() * tc.array() * z.rightCols(u).unaryExpr(hs_grad).array()).matrix();

    dc_next = (dc.array() * fg).matrix();
    const Matrix<S> h_prev = t > 0 ? Matrix<S>(cache.h.middleRows((t - 1) * B, B)) : cache.h0;
    if (masked) {
      const Matrix<S> hm = (h_prev.array() * cache.mask.array()).matrix();
      g.U.noalias() += hm.transpose() * dz;
      dh_next = ((dz * p.U.transpose()).array() * cache.mask.array()).matrix();
    } else {
      g.U.noalias() += h_prev.transpose() * dz;
      dh_next = dz * p.U.transpose();
    }
  }
  g.W = cache.x.transpose() * dpre;
  g.b = dpre.colwise().sum();
  g.x = dpre * p.W.transpose();
  g.h0 = dh_next;
  g.c0 = dc_next;
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over rows (every row is one observation of the
// feature vector; for sequences that is every (sample, step) pair).

template <typename S>
struct BatchNormParams {
  RowVector<S> gamma, beta;
  RowVector<S> running_mean, running_var;
  S momentum = S(0.99);
  S epsilon = S(1e-3);

  static BatchNormParams identity(Index features) {
    BatchNormParams p;
    p.gamma = RowVector<S>::Ones(features);
    p.beta = RowVector<S>::Zero(features);
    p.running_mean = RowVector<S>::Zero(features);
    p.running_var = RowVector<S>::Ones(features);
    return p;
  }
};

template <typename S>
struct BatchNormCache {
  Matrix<S> xhat;
  RowVector<S> inv_std;
  bool batch_stats = false;
};

template <typename S>
struct BatchNormGrads {
  RowVector<S> gamma, beta;
  Matrix<S> x;
};

/// Train mode normalizes by batch statistics and folds them into the
/// running estimates; infer mode uses the running estimates.
template <typename S>
Matrix<S> batchnorm_forward(BatchNormParams<S>& p, const std::type_identity_t<Matrix<S>>& x, Mode mode,
                            BatchNormCache<S>* cache = nullptr) {
  if (x.cols() != p.gamma.size()) throw ShapeError("batch norm width mismatch");
  RowVector<S> mean, var;
  if (mode == Mode::Train) {
    if (x.rows() < 2) throw ArgumentError("batch norm in train mode needs at least 2 rows");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
    p.running_mean = p.momentum * p.running_mean + (S(1) - p.momentum) * mean;
    p.running_var = p.momentum * p.running_var + (S(1) - p.momentum) * var;
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }
  const RowVector<S> inv_std = (var.array() + p.epsilon).rsqrt().matrix();
  Matrix<S> xhat = ((x.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
  Matrix<S> y = (xhat.array().rowwise() * p.gamma.array()).matrix();
  y.rowwise() += p.beta;
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
    cache->batch_stats = mode == Mode::Train;
  }
  return y;
}

/// Inference-mode forward that leaves the parameters untouched.
template <typename S>
Matrix<S> batchnorm_infer(const BatchNormParams<S>& p, const std::type_identity_t<Matrix<S>>& x) {
  if (x.cols() != p.gamma.size()) throw ShapeError("batch norm width mismatch");
  const RowVector<S> scale = ((p.running_var.array() + p.epsilon).rsqrt() * p.gamma.array()).matrix();
  Matrix<S> y = ((x.rowwise() - p.running_mean).array().rowwise() * scale.array()).matrix();
  y.rowwise() += p.beta;
  return y;
}

template <typename S>
BatchNormGrads<S> batchnorm_backward(const BatchNormParams<S>& p, const BatchNormCache<S>& cache,
                                     const std::type_identity_t<Matrix<S>>& dy) {
  if (dy.rows() != cache.xhat.rows() || dy.cols() != cache.xhat.cols())
    throw ShapeError("batch norm upstream gradient shape mismatch");
  BatchNormGrads<S> g;
  g.beta = dy.colwise().sum();
  g.gamma = (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  const Matrix<S> dxhat = (dy.array().rowwise() * p.gamma.array()).matrix();
  if (!cache.batch_stats) {
    g.x = (dxhat.array().rowwise() * cache.inv_std.array()).matrix();
    return g;
  }
  const S n = static_cast<S>(dy.rows());
  const RowVector<S> sum_dxhat = dxhat.colwise().sum();
  const RowVector<S> sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).colwise().sum().matrix();
  Matrix<S> t = (dxhat * n).rowwise() - sum_dxhat;
  t -= (cache.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  g.x = (t.array().rowwise() * (cache.inv_std.array() / n)).matrix();
  return g;
}

// ---------------------------------------------------------------------------
// Dropout (inverted: kept cells are scaled by 1/(1-rate)).

template <typename S>
Matrix<S> dropout_mask(Index rows, Index cols, double rate, Rng& rng) {
  if (!(rate >= 0 && rate < 1)) throw ArgumentError("dropout rate must be in [0, 1)");
  Matrix<S> m(rows, cols);
  if (rate == 0) {
    m.setOnes();
    return m;
  }
  std::bernoulli_distribution keep(1.0 - rate);
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? scale : S(0);
  return m;
}

template <typename S>
Matrix<S> dropout(const Matrix<S>& x, double rate, Rng& rng, Mode mode, Matrix<S>* mask_out = nullptr) {
  if (!(rate >= 0 && rate < 1)) throw ArgumentError("dropout rate must be in [0, 1)");
  if (mode == Mode::Infer || rate == 0) {
    if (mask_out) *mask_out = Matrix<S>();
    return x;
  }
  Matrix<S> mask = dropout_mask<S>(x.rows(), x.cols(), rate, rng);
  Matrix<S> y = (x.array() * mask.array()).matrix();
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

// ---------------------------------------------------------------------------
// Loss and regularizer

template <typename S>
struct LossResult {
  S loss = 0;
  Matrix<S> grad;
};

inline constexpr double kRmseFloor = 1e-12;

/// sqrt(mean((pred - target)^2)); the gradient divides by max(loss, 1e-12).
template <typename S>
LossResult<S> rmse_loss(const Matrix<S>& pred, const Matrix<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("rmse_loss shape mismatch");
  if (pred.size() == 0) throw ShapeError("rmse_loss on an empty batch");
  const Matrix<S> diff = pred - target;
  LossResult<S> r;
  r.loss = std::sqrt(diff.squaredNorm() / static_cast<S>(diff.size()));
  const S denom = static_cast<S>(diff.size()) * std::max(r.loss, static_cast<S>(kRmseFloor));
  r.grad = diff / denom;
  return r;
}

template <typename S>
struct L1Result {
  S penalty = 0;
  RowVector<S> grad;
};

/// lambda * sum|b| with subgradient lambda * sign(b), sign(0) = 0.
template <typename S>
L1Result<S> l1_penalty(const RowVector<S>& bias, S lambda) {
  L1Result<S> r;
  r.penalty = lambda * bias.cwiseAbs().sum();
  r.grad = bias.unaryExpr([lambda](S v) { return v > 0 ? lambda : (v < 0 ? -lambda : S(0)); });
  return r;
}

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double lr0 = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 1e-6;
};

template <typename S>
struct ParamBlock {
  std::span<S> value;
  std::span<const S> grad;
};

/// Adam with bias correction and time decay lr_t = lr / (1 + decay * t).
/// Moments are keyed by block position, so a given optimizer must always be
/// stepped with the same block list.
template <typename S>
class Adam {
 public:
  using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::span<const ParamBlock<S>> blocks, double lr_sched) {
    if (m_.empty()) {
      for (const auto& b : blocks) {
        m_.push_back(Vector::Zero(static_cast<Index>(b.value.size())));
        v_.push_back(Vector::Zero(static_cast<Index>(b.value.size())));
      }
    }
    if (m_.size() != blocks.size()) throw ShapeError("Adam block count changed between steps");
    const double lr = lr_sched / (1.0 + config_.decay * static_cast<double>(t_));
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(config_.beta1), b2 = static_cast<S>(config_.beta2);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const auto& blk = blocks[k];
      const auto n = static_cast<Index>(blk.value.size());
      if (blk.grad.size() != blk.value.size() || m_[k].size() != n)
        throw ShapeError("Adam parameter/gradient shape mismatch");
      Eigen::Map<Vector> w(blk.value.data(), n);
      Eigen::Map<const Vector> g(blk.grad.data(), n);
      m_[k] = b1 * m_[k] + (S(1) - b1) * g;
      v_[k] = b2 * v_[k] + (S(1) - b2) * g.cwiseProduct(g);
      const auto mhat = m_[k].array() / static_cast<S>(c1);
      const auto vhat = v_[k].array() / static_cast<S>(c2);
      w.array() -= static_cast<S>(lr) * mhat / (vhat.sqrt() + static_cast<S>(config_.eps));
    }
  }

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Vector>& first_moments() const { return m_; }
  const std::vector<Vector>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<Vector> m_, v_;
};

/// Reduce-on-plateau: after `patience` epochs without an improvement of at
/// least `min_delta`, multiply the rate by `factor`, never below `min_lr`.
struct PlateauScheduler {
  double lr = 1e-3;
  double factor = 0.1;
  double min_lr = 1e-10;
  double min_delta = 1e-4;
  int patience = 5;
  double best = std::numeric_limits<double>::infinity();
  int wait = 0;

  double step(double epoch_loss) {
    if (epoch_loss < best - min_delta) {
      best = epoch_loss;
      wait = 0;
    } else if (++wait >= patience) {
      lr = std::max(lr * factor, min_lr);
      wait = 0;
    }
    return lr;
  }
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace sdr::nn
