#include "sdr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "sdr/binio.hpp"
#include "sdr/errors.hpp"

namespace sdr::model {

int head_size(HeadKind head) {
  switch (head) {
    case HeadKind::Phq8Binary: return 2;
    case HeadKind::Phq8Score: return 24;
    case HeadKind::Emotion8: return 8;
  }
  return 0;
}

nn::Activation head_activation(HeadKind head) {
  return head == HeadKind::Phq8Binary ? nn::Activation::Sigmoid : nn::Activation::Softmax;
}

std::string head_name(HeadKind head) {
  switch (head) {
    case HeadKind::Phq8Binary: return "phq8_binary";
    case HeadKind::Phq8Score: return "phq8_score";
    case HeadKind::Emotion8: return "emotion8";
  }
  return "?";
}

HeadKind head_from_name(const std::string& name) {
  if (name == "phq8_binary") return HeadKind::Phq8Binary;
  if (name == "phq8_score") return HeadKind::Phq8Score;
  if (name == "emotion8") return HeadKind::Emotion8;
  throw ArgumentError("unknown head '" + name + "'");
}

void ArchitectureSpec::validate() const {
  if (input_dim < 1) throw ArchError("input_dim must be positive");
  if (lstm_units.empty()) throw ArchError("at least one LSTM layer is required");
  for (int u : lstm_units)
    if (u < 1) throw ArchError("LSTM units must be positive");
  for (int u : dense_units)
    if (u < 1) throw ArchError("dense units must be positive");
  if (!(dropout >= 0 && dropout < 1) || !(recurrent_dropout >= 0 && recurrent_dropout < 1))
    throw ArchError("dropout rates must be in [0, 1)");
  if (l1_bias < 0) throw ArchError("l1_bias must be non-negative");
}

bool ArchitectureSpec::same_body(const ArchitectureSpec& o) const {
  return input_dim == o.input_dim && lstm_units == o.lstm_units && dense_units == o.dense_units &&
         pooling == o.pooling;
}

void to_json(nlohmann::json& j, const ArchitectureSpec& a) {
  j = nlohmann::json{{"input_dim", a.input_dim},
                     {"lstm_units", a.lstm_units},
                     {"dense_units", a.dense_units},
                     {"head", head_name(a.head)},
                     {"dropout", a.dropout},
                     {"recurrent_dropout", a.recurrent_dropout},
                     {"l1_bias", a.l1_bias},
                     {"pooling", a.pooling == Pooling::Mean ? "mean" : "last"},
                     {"batch_norm", "per-feature over batch x time"}};
}

void from_json(const nlohmann::json& j, ArchitectureSpec& a) {
  a.input_dim = j.at("input_dim").get<int>();
  a.lstm_units = j.at("lstm_units").get<std::vector<int>>();
  a.dense_units = j.at("dense_units").get<std::vector<int>>();
  a.head = head_from_name(j.at("head").get<std::string>());
  a.dropout = j.at("dropout").get<double>();
  a.recurrent_dropout = j.at("recurrent_dropout").get<double>();
  a.l1_bias = j.at("l1_bias").get<double>();
  const auto pooling = j.at("pooling").get<std::string>();
  if (pooling != "mean" && pooling != "last") throw ArchError("unknown pooling '" + pooling + "'");
  a.pooling = pooling == "mean" ? Pooling::Mean : Pooling::Last;
}

Checkpoint build_model(const ArchitectureSpec& arch, std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.net = build_network<Real>(arch, seed);
  ckpt.norm.mean = Eigen::VectorXd::Zero(arch.input_dim);
  ckpt.norm.std = Eigen::VectorXd::Ones(arch.input_dim);
  ckpt.rng_seed = seed;
  return ckpt;
}

int argmax(std::span<const double> scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

int argmax_row(const Matrix<Real>& m, Index row) {
  Index best = 0;
  for (Index c = 1; c < m.cols(); ++c)
    if (m(row, c) > m(row, best)) best = c;
  return static_cast<int>(best);
}

Prediction forward(const Checkpoint& ckpt, const Matrix<Real>& sequence) {
  if (sequence.rows() < 1) throw ShapeError("empty sequence");
  const Matrix<Real> out = forward_batch(ckpt.net, sequence, 1);
  Prediction p;
  p.task = ckpt.net.arch.head;
  p.scores.assign(out.data(), out.data() + out.cols());
  p.predicted_class = argmax(p.scores);
  return p;
}

namespace {

/// Splits [0, n) into runs of equal sequence length no longer than `chunk`.
template <typename F>
void for_each_chunk(std::span<const Sample> samples, Index chunk, F&& fn) {
  std::size_t begin = 0;
  while (begin < samples.size()) {
    std::size_t end = begin + 1;
    while (end < samples.size() && static_cast<Index>(end - begin) < chunk &&
           samples[end].seq.rows() == samples[begin].seq.rows())
      ++end;
    fn(begin, end);
    begin = end;
  }
}

std::vector<const Matrix<Real>*> gather(std::span<const Sample> samples, std::span<const std::size_t> idx) {
  std::vector<const Matrix<Real>*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&samples[i].seq);
  return out;
}

Matrix<Real> one_hot(std::span<const int> labels, int k) {
  Matrix<Real> t = Matrix<Real>::Zero(static_cast<Index>(labels.size()), k);
  for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Index>(i), labels[i]) = 1;
  return t;
}

void check_labels(std::span<const Sample> samples, int k) {
  for (const auto& s : samples)
    if (s.label < 0 || s.label >= k)
      throw LabelError("label " + std::to_string(s.label) + " outside head range [0, " + std::to_string(k) + ")");
}

struct SetMetrics {
  double sq = 0;
  double cells = 0;
  double correct = 0;
  double count = 0;
  void add(const Matrix<Real>& scores, std::span<const int> labels) {
    for (Index r = 0; r < scores.rows(); ++r) {
      const int y = labels[static_cast<std::size_t>(r)];
      for (Index c = 0; c < scores.cols(); ++c) {
        const double d = static_cast<double>(scores(r, c)) - (c == y ? 1.0 : 0.0);
        sq += d * d;
      }
      cells += static_cast<double>(scores.cols());
      correct += argmax_row(scores, r) == y ? 1.0 : 0.0;
      count += 1;
    }
  }
  double rmse() const { return cells > 0 ? std::sqrt(sq / cells) : 0.0; }
  double accuracy() const { return count > 0 ? correct / count : 0.0; }
};

void check_finite(const Matrix<Real>& m, const char* what) {
  if (!m.allFinite()) throw Error(std::string("non-finite values in ") + what);
}

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

/// Pooled LSTM features of every sample (inference mode).
Matrix<Real> encode_all(const Net& net, std::span<const Sample> samples) {
  const Index width = net.lstm.back().units();
  Matrix<Real> out(static_cast<Index>(samples.size()), width);
  for_each_chunk(samples, 256, [&](std::size_t b, std::size_t e) {
    std::vector<std::size_t> idx(e - b);
    std::iota(idx.begin(), idx.end(), b);
    const auto seqs = gather(samples, idx);
    const Matrix<Real> x = stack_time_major<Real>(seqs);
    out.middleRows(static_cast<Index>(b), static_cast<Index>(e - b)) =
        encode(net, x, static_cast<Index>(e - b));
  });
  return out;
}

}  // namespace

Matrix<Real> predict_scores(const Net& net, std::span<const Sample> samples, Index chunk) {
  const int k = head_size(net.arch.head);
  Matrix<Real> out(static_cast<Index>(samples.size()), k);
  for_each_chunk(samples, chunk, [&](std::size_t b, std::size_t e) {
    std::vector<std::size_t> idx(e - b);
    std::iota(idx.begin(), idx.end(), b);
    const auto seqs = gather(samples, idx);
    const Matrix<Real> x = stack_time_major<Real>(seqs);
    out.middleRows(static_cast<Index>(b), static_cast<Index>(e - b)) =
        forward_batch(net, x, static_cast<Index>(e - b));
  });
  return out;
}

TrainResult train(Checkpoint& ckpt, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig& config) {
  Net& net = ckpt.net;
  const int k = head_size(net.arch.head);
  if (train_set.empty()) throw ArgumentError("empty training set");
  if (config.batch < 1) throw ArgumentError("batch size must be positive");
  if (config.epochs < 0) throw ArgumentError("epochs must be non-negative");
  check_labels(train_set, k);
  check_labels(val_set, k);
  const bool frozen = config.freeze_lstm;

  Matrix<Real> pooled_train, pooled_val;
  if (frozen) {
    pooled_train = encode_all(net, train_set);
    if (!val_set.empty()) pooled_val = encode_all(net, val_set);
  }
  const std::vector<int> train_labels = labels_of(train_set);
  const std::vector<int> val_labels = labels_of(val_set);

  nn::Adam<Real> adam(config.adam);
  nn::PlateauScheduler sched = config.scheduler;
  sched.lr = config.adam.lr0;

  TrainResult result;
  Net best = net;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(config.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    SetMetrics train_metrics;
    const double lr = sched.lr;

    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch));
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(train_set[i].label);
      const Matrix<Real> target = one_hot(labels, k);

      ForwardCache<Real> cache;
      Matrix<Real> out;
      if (frozen) {
        Matrix<Real> pooled(static_cast<Index>(idx.size()), pooled_train.cols());
        for (std::size_t r = 0; r < idx.size(); ++r)
          pooled.row(static_cast<Index>(r)) = pooled_train.row(static_cast<Index>(idx[r]));
        out = head_forward<Real>(net, pooled, &cache);
      } else {
        const auto seqs = gather(train_set, idx);
        const Matrix<Real> x = stack_time_major<Real>(seqs);
        Rng drop_rng = make_rng(config.seed, "dropout", step);
        out = forward_batch(net, x, static_cast<Index>(idx.size()), nn::Mode::Train, &drop_rng, &cache);
      }
      check_finite(out, "network output");
      train_metrics.add(out, labels);

      const auto loss = nn::rmse_loss(out, target);
      Gradients<Real> grads = backward_batch<Real>(net, cache, loss.grad, frozen);
      if (!frozen) add_l1_bias<Real>(net, grads);

      auto blocks = net.blocks();
      std::vector<nn::ParamBlock<Real>> trainable;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (!blocks[b].trainable) continue;
        if (frozen && (blocks[b].group == BlockGroup::Lstm || blocks[b].group == BlockGroup::BatchNorm)) continue;
        const auto& g = grads.blocks[b];
        if (g.size() != static_cast<std::size_t>(blocks[b].size()))
          throw Error("missing gradient for " + blocks[b].name);
        for (Real v : g)
          if (!std::isfinite(v)) throw Error("non-finite gradient in " + blocks[b].name);
        trainable.push_back({blocks[b].span(), std::span<const Real>(g)});
      }
      adam.step(trainable, lr);
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_rmse = train_metrics.rmse();
    rec.train_accuracy = train_metrics.accuracy();
    rec.lr = lr;
    double monitored = rec.train_rmse;
    if (!val_set.empty()) {
      SetMetrics vm;
      const Matrix<Real> scores = frozen ? head_forward<Real>(net, pooled_val, nullptr) : predict_scores(net, val_set);
      check_finite(scores, "validation output");
      vm.add(scores, val_labels);
      rec.val_rmse = vm.rmse();
      rec.val_accuracy = vm.accuracy();
      monitored = rec.val_rmse;
      if (rec.val_rmse < best_val) {
        best_val = rec.val_rmse;
        best = net;
        result.best_epoch = epoch;
      }
    }
    sched.step(monitored);
    result.history.push_back(rec);
  }

  if (config.keep_best && !val_set.empty() && result.best_epoch > 0) net = best;
  if (val_set.empty() || !config.keep_best) result.best_epoch = config.epochs;
  ckpt.provenance.epochs += config.epochs;
  if (!result.history.empty()) {
    const auto& chosen = result.history[static_cast<std::size_t>(std::max(result.best_epoch, 1) - 1)];
    ckpt.provenance.final_train_loss = chosen.train_rmse;
    ckpt.provenance.final_val_loss = chosen.val_rmse;
  }
  return result;
}

nlohmann::json history_to_json(const TrainResult& result) {
  nlohmann::json epochs = nlohmann::json::array();
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  for (const auto& r : result.history)
    epochs.push_back({{"epoch", r.epoch},
                      {"train_rmse", num(r.train_rmse)},
                      {"train_accuracy", num(r.train_accuracy)},
                      {"val_rmse", num(r.val_rmse)},
                      {"val_accuracy", num(r.val_accuracy)},
                      {"lr", r.lr}});
  return {{"epochs", result.history.size()}, {"best_epoch", result.best_epoch}, {"history", epochs}};
}

std::string history_to_csv(const TrainResult& result) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_rmse,train_accuracy,val_rmse,val_accuracy,lr\n";
  for (const auto& r : result.history)
    out << r.epoch << ',' << r.train_rmse << ',' << r.train_accuracy << ',' << r.val_rmse << ','
        << r.val_accuracy << ',' << r.lr << '\n';
  return out.str();
}

Checkpoint pretrain_emotion(ArchitectureSpec arch, std::span<const Sample> train_set,
                            std::span<const Sample> val_set, const TrainConfig& config, TrainResult* result) {
  arch.head = HeadKind::Emotion8;
  Checkpoint ckpt = build_model(arch, config.seed);
  auto r = train(ckpt, train_set, val_set, config);
  if (result) *result = std::move(r);
  return ckpt;
}

Checkpoint fine_tune(const Checkpoint& pretrained, HeadKind target, std::span<const Sample> train_set,
                     std::span<const Sample> val_set, TrainConfig config, TrainResult* result) {
  ArchitectureSpec arch = pretrained.net.arch;
  arch.head = target;
  return fine_tune(pretrained, arch, train_set, val_set, config, result);
}

Checkpoint fine_tune(const Checkpoint& pretrained, const ArchitectureSpec& target, std::span<const Sample> train_set,
                     std::span<const Sample> val_set, TrainConfig config, TrainResult* result) {
  target.validate();
  if (!target.same_body(pretrained.net.arch)) throw ArchError("pretrained body does not match the target architecture");
  const ArchitectureSpec& arch = target;
  if (pretrained.net.lstm.size() != arch.lstm_units.size() || pretrained.net.dense.size() != arch.dense_units.size() + 1)
    throw ArchError("pretrained parameters do not match their architecture");

  Checkpoint ckpt = pretrained;
  ckpt.net.arch = arch;
  ckpt.provenance.note = "fine-tuned from " + head_name(pretrained.net.arch.head);
  if (head_size(arch.head) != ckpt.net.dense.back().W.cols()) {
    reset_head(ckpt.net, derive_seed(config.seed, "finetune-head"));
  } else {
    ckpt.net.dense.back().act = head_activation(arch.head);
  }
  config.freeze_lstm = true;
  auto r = train(ckpt, train_set, val_set, config);
  if (result) *result = std::move(r);
  return ckpt;
}

std::uint64_t lstm_stack_hash(const Net& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& b : net.blocks()) {
    if (b.group != BlockGroup::Lstm && b.group != BlockGroup::BatchNorm) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(b.data);
    for (std::size_t i = 0; i < sizeof(Real) * static_cast<std::size_t>(b.size()); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

constexpr char kMagic[3] = {'S', 'D', 'R'};
constexpr std::uint8_t kVersionByte = '0' + kFormatVersion;

nlohmann::json nan_safe(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double nan_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json blocks = nlohmann::json::array();
  std::vector<float> payload;
  payload.reserve(ckpt.net.parameter_count());
  for (const auto& b : ckpt.net.blocks()) {
    blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    payload.insert(payload.end(), b.data, b.data + b.size());
  }
  const nlohmann::json header = {
      {"format_version", ckpt.format_version},
      {"arch", ckpt.net.arch},
      {"frame_spec", ckpt.frame},
      {"norm", dsp::norm_to_json(ckpt.norm)},
      {"rng_seed", ckpt.rng_seed},
      {"batch_norm", {{"momentum", ckpt.net.bn.empty() ? 0.99 : static_cast<double>(ckpt.net.bn[0].momentum)},
                      {"epsilon", ckpt.net.bn.empty() ? 1e-3 : static_cast<double>(ckpt.net.bn[0].epsilon)}}},
      {"provenance",
       {{"epochs", ckpt.provenance.epochs},
        {"final_train_loss", nan_safe(ckpt.provenance.final_train_loss)},
        {"final_val_loss", nan_safe(ckpt.provenance.final_val_loss)},
        {"note", ckpt.provenance.note}}},
      {"blocks", blocks}};
  std::vector<std::uint8_t> out(kMagic, kMagic + 3);
  out.push_back(kVersionByte);
  const auto body = binio::encode_header_payload(header, payload);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 3) != 0) throw FormatError("not a checkpoint file");
  if (bytes[3] != kVersionByte)
    throw VersionError("unsupported checkpoint version byte '" + std::string(1, static_cast<char>(bytes[3])) + "'");
  const auto hp = binio::decode_header_payload(bytes, 4);
  try {
    const auto& h = hp.header;
    const int version = h.at("format_version").get<int>();
    if (version != kFormatVersion) throw VersionError("unsupported checkpoint format_version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.format_version = version;
    const auto arch = h.at("arch").get<ArchitectureSpec>();
    ckpt.net = build_network<Real>(arch, 0);
    ckpt.frame = h.at("frame_spec").get<dsp::FrameSpec>();
    const auto mean = h.at("norm").at("mean").get<std::vector<double>>();
    const auto std = h.at("norm").at("std").get<std::vector<double>>();
    if (mean.size() != static_cast<std::size_t>(arch.input_dim) || std.size() != mean.size())
      throw FormatError("norm stats width does not match input_dim");
    ckpt.norm.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Index>(mean.size()));
    ckpt.norm.std = Eigen::Map<const Eigen::VectorXd>(std.data(), static_cast<Index>(std.size()));
    ckpt.rng_seed = h.at("rng_seed").get<std::uint64_t>();
    const auto& bn = h.at("batch_norm");
    for (auto& p : ckpt.net.bn) {
      p.momentum = static_cast<Real>(bn.at("momentum").get<double>());
      p.epsilon = static_cast<Real>(bn.at("epsilon").get<double>());
    }
    const auto& prov = h.at("provenance");
    ckpt.provenance.epochs = prov.at("epochs").get<int>();
    ckpt.provenance.final_train_loss = nan_from(prov.at("final_train_loss"));
    ckpt.provenance.final_val_loss = nan_from(prov.at("final_val_loss"));
    ckpt.provenance.note = prov.at("note").get<std::string>();

    auto blocks = ckpt.net.blocks();
    const auto& listed = h.at("blocks");
    if (listed.size() != blocks.size()) throw FormatError("block count does not match architecture");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = listed[i];
      if (b.at("name").get<std::string>() != blocks[i].name || b.at("rows").get<Index>() != blocks[i].rows ||
          b.at("cols").get<Index>() != blocks[i].cols)
        throw FormatError("block " + blocks[i].name + " does not match architecture");
      offset += static_cast<std::size_t>(blocks[i].size());
    }
    if (offset != hp.payload.size()) throw FormatError("payload size does not match blocks");
    offset = 0;
    for (auto& b : blocks) {
      std::copy_n(hp.payload.data() + offset, b.size(), b.data);
      offset += static_cast<std::size_t>(b.size());
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  } catch (const ArchError& e) {
    throw FormatError(std::string("bad checkpoint architecture: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  binio::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace sdr::model
