#pragma once

// Template definitions for model.hpp.

#include <string>

namespace sdr::model {

template <typename S>
std::vector<NamedBlock<S>> Network<S>::blocks() {
  std::vector<NamedBlock<S>> out;
  auto add = [&out](std::string name, auto& m, BlockGroup g, bool trainable) {
    out.push_back({std::move(name), m.data(), m.rows(), m.cols(), g, trainable});
  };
  for (std::size_t l = 0; l < lstm.size(); ++l) {
    const std::string p = "lstm" + std::to_string(l) + ".";
    add(p + "W", lstm[l].W, BlockGroup::Lstm, true);
    add(p + "U", lstm[l].U, BlockGroup::Lstm, true);
    add(p + "b", lstm[l].b, BlockGroup::Lstm, true);
    const std::string q = "bn" + std::to_string(l) + ".";
    add(q + "gamma", bn[l].gamma, BlockGroup::BatchNorm, true);
    add(q + "beta", bn[l].beta, BlockGroup::BatchNorm, true);
    add(q + "running_mean", bn[l].running_mean, BlockGroup::BatchNorm, false);
    add(q + "running_var", bn[l].running_var, BlockGroup::BatchNorm, false);
  }
  for (std::size_t d = 0; d < dense.size(); ++d) {
    const bool head = d + 1 == dense.size();
    const std::string p = head ? std::string("head.") : "dense" + std::to_string(d) + ".";
    const auto g = head ? BlockGroup::Head : BlockGroup::Dense;
    add(p + "W", dense[d].W, g, true);
    add(p + "b", dense[d].b, g, true);
  }
  return out;
}

template <typename S>
std::vector<NamedBlock<const S>> Network<S>::blocks() const {
  auto mut = const_cast<Network<S>*>(this)->blocks();
  std::vector<NamedBlock<const S>> out;
  out.reserve(mut.size());
  for (auto& b : mut) out.push_back({b.name, b.data, b.rows, b.cols, b.group, b.trainable});
  return out;
}

template <typename S>
std::size_t Network<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks()) n += static_cast<std::size_t>(b.size());
  return n;
}

template <typename S>
template <typename T>
Network<T> Network<S>::cast() const {
  Network<T> out;
  out.arch = arch;
  for (const auto& l : lstm) out.lstm.push_back({l.W.template cast<T>(), l.U.template cast<T>(), l.b.template cast<T>()});
  for (const auto& b : bn) {
    nn::BatchNormParams<T> p;
    p.gamma = b.gamma.template cast<T>();
    p.beta = b.beta.template cast<T>();
    p.running_mean = b.running_mean.template cast<T>();
    p.running_var = b.running_var.template cast<T>();
    p.momentum = static_cast<T>(b.momentum);
    p.epsilon = static_cast<T>(b.epsilon);
    out.bn.push_back(std::move(p));
  }
  for (const auto& d : dense) out.dense.push_back({d.W.template cast<T>(), d.b.template cast<T>(), d.act});
  return out;
}

template <typename S>
Network<S> build_network(const ArchitectureSpec& arch, std::uint64_t seed) {
  arch.validate();
  Network<S> net;
  net.arch = arch;
  Rng rng = make_rng(seed, "build");
  Index in = arch.input_dim;
  for (int units : arch.lstm_units) {
    net.lstm.push_back(nn::lstm_init<S>(in, units, rng));
    net.bn.push_back(nn::BatchNormParams<S>::identity(units));
    in = units;
  }
  for (int units : arch.dense_units) {
    net.dense.push_back({nn::glorot_uniform<S>(in, units, rng), RowVector<S>::Zero(units), nn::Activation::Tanh});
    in = units;
  }
  const int k = head_size(arch.head);
  net.dense.push_back({nn::glorot_uniform<S>(in, k, rng), RowVector<S>::Zero(k), head_activation(arch.head)});
  return net;
}

template <typename S>
void reset_head(Network<S>& net, std::uint64_t seed) {
  Rng rng = make_rng(seed, "head");
  const Index in = net.dense.back().W.rows();
  const int k = head_size(net.arch.head);
  net.dense.back() = {nn::glorot_uniform<S>(in, k, rng), RowVector<S>::Zero(k), head_activation(net.arch.head)};
}

namespace detail {

template <typename S>
Matrix<S> pool(const Matrix<S>& h, Index batch, Pooling pooling) {
  const Index steps = h.rows() / batch;
  if (pooling == Pooling::Last) return h.middleRows((steps - 1) * batch, batch);
  Matrix<S> out = Matrix<S>::Zero(batch, h.cols());
  for (Index t = 0; t < steps; ++t) out += h.middleRows(t * batch, batch);
  return out / static_cast<S>(steps);
}

template <typename S>
Matrix<S> pool_backward(const Matrix<S>& dpooled, Index batch, Index steps, Pooling pooling) {
  Matrix<S> dh = Matrix<S>::Zero(batch * steps, dpooled.cols());
  if (pooling == Pooling::Last) {
    dh.middleRows((steps - 1) * batch, batch) = dpooled;
    return dh;
  }
  const Matrix<S> share = dpooled / static_cast<S>(steps);
  for (Index t = 0; t < steps; ++t) dh.middleRows(t * batch, batch) = share;
  return dh;
}

template <typename S>
void check_input(const Network<S>& net, const Matrix<S>& x, Index batch) {
  if (x.cols() != net.arch.input_dim)
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(net.arch.input_dim));
  if (batch < 1 || x.rows() < batch || x.rows() % batch != 0)
    throw ShapeError("input rows are not steps * batch");
}

}  // namespace detail

template <typename S>
Matrix<S> encode(Network<S>& net, const Matrix<S>& x, Index batch, nn::Mode mode, Rng* rng,
                 ForwardCache<S>* cache) {
  if (mode == nn::Mode::Infer) return encode(static_cast<const Network<S>&>(net), x, batch);
  detail::check_input(net, x, batch);
  if (!rng) throw ArgumentError("train-mode forward needs an rng");
  const Index steps = x.rows() / batch;
  if (cache) {
    *cache = ForwardCache<S>{};
    cache->batch = batch;
    cache->steps = steps;
    cache->lstm.resize(net.lstm.size());
    cache->bn.resize(net.lstm.size());
    cache->recurrent_mask.resize(net.lstm.size());
    cache->drop_mask.resize(net.lstm.size());
  }
  Matrix<S> h = x;
  const Matrix<S> none;
  for (std::size_t l = 0; l < net.lstm.size(); ++l) {
    const Index u = net.lstm[l].units();
    Matrix<S> rmask;
    if (net.arch.recurrent_dropout > 0) rmask = nn::dropout_mask<S>(batch, u, net.arch.recurrent_dropout, *rng);
    h = nn::lstm_forward(net.lstm[l], h, batch, none, none, rmask.size() ? &rmask : static_cast<const Matrix<S>*>(nullptr),
                         cache ? &cache->lstm[l] : nullptr);
    h = nn::batchnorm_forward(net.bn[l], h, nn::Mode::Train, cache ? &cache->bn[l] : nullptr);
    Matrix<S> dmask;
    h = nn::dropout(h, net.arch.dropout, *rng, nn::Mode::Train, &dmask);
    if (cache) {
      cache->recurrent_mask[l] = std::move(rmask);
      cache->drop_mask[l] = std::move(dmask);
    }
  }
  return detail::pool(h, batch, net.arch.pooling);
}

template <typename S>
Matrix<S> encode(const Network<S>& net, const Matrix<S>& x, Index batch) {
  detail::check_input(net, x, batch);
  Matrix<S> h = x;
  const Matrix<S> none;
  for (std::size_t l = 0; l < net.lstm.size(); ++l) {
    h = nn::lstm_forward(net.lstm[l], h, batch, none, none, static_cast<const Matrix<S>*>(nullptr));
    h = nn::batchnorm_infer(net.bn[l], h);
  }
  return detail::pool(h, batch, net.arch.pooling);
}

template <typename S>
Matrix<S> head_forward(const Network<S>& net, const Matrix<S>& pooled, ForwardCache<S>* cache) {
  if (cache) cache->dense.assign(net.dense.size(), {});
  Matrix<S> y = pooled;
  for (std::size_t d = 0; d < net.dense.size(); ++d)
    y = nn::dense_forward(net.dense[d], y, cache ? &cache->dense[d] : nullptr);
  return y;
}

template <typename S>
Matrix<S> forward_batch(Network<S>& net, const Matrix<S>& x, Index batch, nn::Mode mode, Rng* rng,
                        ForwardCache<S>* cache) {
  const Matrix<S> pooled = encode(net, x, batch, mode, rng, cache);
  return head_forward(static_cast<const Network<S>&>(net), pooled, cache);
}

template <typename S>
Matrix<S> forward_batch(const Network<S>& net, const Matrix<S>& x, Index batch) {
  return head_forward(net, encode(net, x, batch), static_cast<ForwardCache<S>*>(nullptr));
}

template <typename S>
Gradients<S> backward_batch(const Network<S>& net, const ForwardCache<S>& cache, const Matrix<S>& dout,
                            bool dense_only) {
  const auto blocks = net.blocks();
  Gradients<S> grads;
  grads.blocks.resize(blocks.size());
  auto store = [&](std::size_t idx, const auto& m) {
    grads.blocks[idx].assign(m.data(), m.data() + m.size());
  };
  // Block layout: 7 per LSTM layer (W, U, b, gamma, beta, rm, rv), then 2 per dense.
  const std::size_t dense_base = 7 * net.lstm.size();
  Matrix<S> d = dout;
  for (std::size_t k = net.dense.size(); k-- > 0;) {
    const auto g = nn::dense_backward(net.dense[k], cache.dense[k], d);
    store(dense_base + 2 * k, g.W);
    store(dense_base + 2 * k + 1, g.b);
    d = g.x;
  }
  if (dense_only) return grads;
  if (cache.lstm.size() != net.lstm.size()) throw ArgumentError("backward needs a train-mode forward cache");
  Matrix<S> dh = detail::pool_backward(d, cache.batch, cache.steps, net.arch.pooling);
  for (std::size_t l = net.lstm.size(); l-- > 0;) {
    if (cache.drop_mask[l].size()) dh = (dh.array() * cache.drop_mask[l].array()).matrix();
    const auto gb = nn::batchnorm_backward(net.bn[l], cache.bn[l], dh);
    store(7 * l + 3, gb.gamma);
    store(7 * l + 4, gb.beta);
    const auto gl = nn::lstm_backward(net.lstm[l], cache.lstm[l], gb.x);
    store(7 * l + 0, gl.W);
    store(7 * l + 1, gl.U);
    store(7 * l + 2, gl.b);
    dh = gl.x;
  }
  return grads;
}

template <typename S>
S add_l1_bias(const Network<S>& net, Gradients<S>& grads) {
  const S lambda = static_cast<S>(net.arch.l1_bias);
  if (lambda == S(0)) return S(0);
  S penalty = 0;
  for (std::size_t l = 0; l < net.lstm.size(); ++l) {
    const auto r = nn::l1_penalty(net.lstm[l].b, lambda);
    penalty += r.penalty;
    auto& g = grads.blocks[7 * l + 2];
    if (g.empty()) g.assign(static_cast<std::size_t>(r.grad.size()), S(0));
    for (Index i = 0; i < r.grad.size(); ++i) g[static_cast<std::size_t>(i)] += r.grad[i];
  }
  return penalty;
}

template <typename S>
Matrix<S> stack_time_major(std::span<const Matrix<S>* const> seqs) {
  if (seqs.empty()) throw ShapeError("no sequences to stack");
  const Index steps = seqs.front()->rows();
  const Index dim = seqs.front()->cols();
  const auto batch = static_cast<Index>(seqs.size());
  Matrix<S> out(steps * batch, dim);
  for (Index b = 0; b < batch; ++b) {
    const Matrix<S>& s = *seqs[static_cast<std::size_t>(b)];
    if (s.rows() != steps || s.cols() != dim) throw ShapeError("sequences in a batch must share a shape");
    for (Index t = 0; t < steps; ++t) out.row(t * batch + b) = s.row(t);
  }
  return out;
}

}  // namespace sdr::model
