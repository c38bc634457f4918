#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/dsp.hpp"
#include "sdr/nn.hpp"

namespace sdr::model {

using nn::Index;
using nn::Matrix;
using nn::RowVector;

enum class HeadKind { Phq8Binary, Phq8Score, Emotion8 };
enum class Pooling { Mean, Last };

int head_size(HeadKind head);
nn::Activation head_activation(HeadKind head);
std::string head_name(HeadKind head);
HeadKind head_from_name(const std::string& name);

struct ArchitectureSpec {
  int input_dim = 60;
  std::vector<int> lstm_units{40, 30, 20};
  std::vector<int> dense_units{15, 10};
  HeadKind head = HeadKind::Phq8Binary;
  double dropout = 0.2;
  double recurrent_dropout = 0.2;
  double l1_bias = 0.001;
  Pooling pooling = Pooling::Mean;

  void validate() const;
  /// Equal in everything but the head.
  bool same_body(const ArchitectureSpec& other) const;
};

void to_json(nlohmann::json& j, const ArchitectureSpec& a);
void from_json(const nlohmann::json& j, ArchitectureSpec& a);

enum class BlockGroup { Lstm, BatchNorm, Dense, Head };

/// View of one parameter array in checkpoint order.
template <typename S>
struct NamedBlock {
  std::string name;
  S* data = nullptr;
  Index rows = 0;
  Index cols = 0;
  BlockGroup group = BlockGroup::Dense;
  bool trainable = true;  // false for batch-norm running statistics

  Index size() const { return rows * cols; }
  std::span<S> span() const { return {data, static_cast<std::size_t>(size())}; }
};

/// LSTM(+BN) stack, temporal pooling, dense tanh layers, output head.
template <typename S>
struct Network {
  ArchitectureSpec arch;
  std::vector<nn::LstmParams<S>> lstm;
  std::vector<nn::BatchNormParams<S>> bn;
  std::vector<nn::DenseParams<S>> dense;  // hidden layers, then the head

  std::vector<NamedBlock<S>> blocks();
  std::vector<NamedBlock<const S>> blocks() const;
  std::size_t parameter_count() const;

  template <typename T>
  Network<T> cast() const;
};

template <typename S>
Network<S> build_network(const ArchitectureSpec& arch, std::uint64_t seed);

/// Re-initializes the output layer for `arch.head` (Glorot weights, zero bias).
template <typename S>
void reset_head(Network<S>& net, std::uint64_t seed);

template <typename S>
struct ForwardCache {
  Index batch = 0;
  Index steps = 0;
  std::vector<nn::LstmCache<S>> lstm;
  std::vector<nn::BatchNormCache<S>> bn;
  std::vector<Matrix<S>> recurrent_mask;
  std::vector<Matrix<S>> drop_mask;
  std::vector<nn::DenseCache<S>> dense;
};

/// Stacked LSTM/BN/dropout and pooling; returns batch x last_units.
/// `x` is steps*batch x input_dim (time-major). Train mode needs `rng` and
/// updates BN running statistics.
template <typename S>
Matrix<S> encode(Network<S>& net, const Matrix<S>& x, Index batch, nn::Mode mode, Rng* rng,
                 ForwardCache<S>* cache);
template <typename S>
Matrix<S> encode(const Network<S>& net, const Matrix<S>& x, Index batch);

/// Dense layers and head on pooled features.
template <typename S>
Matrix<S> head_forward(const Network<S>& net, const Matrix<S>& pooled, ForwardCache<S>* cache);

/// Full forward: head outputs, batch x head_size.
template <typename S>
Matrix<S> forward_batch(Network<S>& net, const Matrix<S>& x, Index batch, nn::Mode mode, Rng* rng,
                        ForwardCache<S>* cache);
template <typename S>
Matrix<S> forward_batch(const Network<S>& net, const Matrix<S>& x, Index batch);

/// Gradients aligned with Network::blocks(); entries for non-trainable or
/// frozen blocks are left empty.
template <typename S>
struct Gradients {
  std::vector<std::vector<S>> blocks;
};

/// Backpropagates dL/d(output). With `dense_only`, stops at the pooled
/// features (the cache may then come from head_forward alone).
template <typename S>
Gradients<S> backward_batch(const Network<S>& net, const ForwardCache<S>& cache, const Matrix<S>& dout,
                            bool dense_only = false);

/// Adds the L1 bias penalty's subgradient to the LSTM bias gradients and
/// returns the penalty.
template <typename S>
S add_l1_bias(const Network<S>& net, Gradients<S>& grads);

/// Stacks equal-length sequences (each steps x dim) time-major.
template <typename S>
Matrix<S> stack_time_major(std::span<const Matrix<S>* const> seqs);

// ---------------------------------------------------------------------------
// Checkpoints, training, transfer (float).

using Real = float;
using Net = Network<Real>;

inline constexpr int kFormatVersion = 1;

struct Provenance {
  int epochs = 0;
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  double final_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::string note;
};

struct Checkpoint {
  Net net;
  dsp::NormStats norm;
  dsp::FrameSpec frame;
  std::uint64_t rng_seed = 0;
  int format_version = kFormatVersion;
  Provenance provenance;
};

/// Untrained model: Glorot weights, forget-gate bias 1, identity norm stats.
Checkpoint build_model(const ArchitectureSpec& arch, std::uint64_t seed);

struct Prediction {
  std::vector<double> scores;
  int predicted_class = 0;
  HeadKind task = HeadKind::Phq8Binary;
};

/// argmax with ties going to the lowest index.
int argmax(std::span<const double> scores);
int argmax_row(const Matrix<Real>& m, Index row);

/// One sequence (steps x input_dim), inference mode.
Prediction forward(const Checkpoint& ckpt, const Matrix<Real>& sequence);

struct Sample {
  Matrix<Real> seq;  // steps x input_dim
  int label = 0;
  std::string participant;
};

/// Head outputs for many samples in inference mode (chunks of equal length).
Matrix<Real> predict_scores(const Net& net, std::span<const Sample> samples, Index chunk = 256);

struct TrainConfig {
  int batch = 130;
  int epochs = 120;
  std::uint64_t seed = 0;
  nn::AdamConfig adam;
  nn::PlateauScheduler scheduler;
  bool freeze_lstm = false;  // train dense layers and head only
  bool keep_best = true;     // keep the lowest-validation-RMSE epoch
};

struct EpochRecord {
  int epoch = 0;
  double train_rmse = 0;
  double train_accuracy = 0;
  double val_rmse = std::numeric_limits<double>::quiet_NaN();
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

/// Mini-batch Adam on rmse + L1(LSTM biases). Throws LabelError for labels
/// outside the head and ArgumentError for an empty training set.
TrainResult train(Checkpoint& ckpt, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig& config);

nlohmann::json history_to_json(const TrainResult& result);
std::string history_to_csv(const TrainResult& result);

/// Builds an Emotion8 model from `arch` and trains it.
Checkpoint pretrain_emotion(ArchitectureSpec arch, std::span<const Sample> train_set,
                            std::span<const Sample> val_set, const TrainConfig& config,
                            TrainResult* result = nullptr);

/// Swaps in `target` head (re-initialized when its shape changes), freezes
/// the LSTM/BN stack and trains the dense layers. Throws ArchError when the
/// bodies differ.
Checkpoint fine_tune(const Checkpoint& pretrained, HeadKind target, std::span<const Sample> train_set,
                     std::span<const Sample> val_set, TrainConfig config, TrainResult* result = nullptr);
Checkpoint fine_tune(const Checkpoint& pretrained, const ArchitectureSpec& target, std::span<const Sample> train_set,
                     std::span<const Sample> val_set, TrainConfig config, TrainResult* result = nullptr);

/// FNV-1a over the float bits of the LSTM and BN blocks.
std::uint64_t lstm_stack_hash(const Net& net);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sdr::model

#include "sdr/model_impl.hpp"
