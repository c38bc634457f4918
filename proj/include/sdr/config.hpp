#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sdr/augment.hpp"
#include "sdr/dsp.hpp"
#include "sdr/manifest.hpp"
#include "sdr/model.hpp"

namespace sdr::config {

struct TrainingSettings {
  int batch = 130;
  int epochs = 120;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double decay = 1e-6;
  double min_lr = 1e-10;
  double plateau_factor = 0.1;
  int plateau_patience = 5;
  double plateau_min_delta = 1e-4;
};

struct ExperimentSettings {
  manifest::Split eval_split = manifest::Split::Val;
  std::vector<double> noise_fractions{0.1, 1.0};
  double noise_sigma = 0.1;
  int bdi_threshold = 14;
};

/// Whole-run configuration, read from `key=value` lines with dotted keys,
/// e.g. `frame.clip_len_s=2.5`, `train.epochs=120`, `arch.lstm_units=40,30,20`.
struct RunConfig {
  dsp::FrameSpec frame;
  augment::AugmentConfig augment;
  model::ArchitectureSpec arch;
  TrainingSettings training;
  ExperimentSettings experiment;
  double min_segment_s = 0.100;

  model::TrainConfig train_config() const;
  /// Non-fatal notes (e.g. a batch size outside 100..170).
  std::vector<std::string> warnings() const;
  void validate() const;
};

/// Throws ParseError on unknown keys or malformed values.
RunConfig parse_config(std::string_view text);
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);

/// Worker count: SDR_THREADS when set (>= 1), else hardware concurrency.
unsigned thread_budget();

}  // namespace sdr::config
