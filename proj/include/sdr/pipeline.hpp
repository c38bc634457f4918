#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/config.hpp"
#include "sdr/dataset.hpp"
#include "sdr/eval.hpp"
#include "sdr/manifest.hpp"
#include "sdr/model.hpp"

namespace sdr::pipeline {

namespace fs = std::filesystem;

/// Normalized per-row features as written by extract.
struct FeatureSet {
  std::vector<dataset::ParticipantData> participants;  // manifest order
  dsp::NormStats norm;
  dsp::FrameSpec frame;
};

inline constexpr const char* kNormFile = "train.nrm";

struct ExtractSummary {
  std::size_t written = 0;
  std::vector<dataset::RowFailure> failures;
};

/// One <id>.fmx per row (normalized) plus train.nrm fitted on train rows.
ExtractSummary extract_to_dir(const manifest::DatasetManifest& m, const config::RunConfig& cfg,
                              const fs::path& out_dir);

/// Loads <id>.fmx for every manifest row. Throws ArgumentError when the
/// directory, the stats or a row's features are missing.
FeatureSet load_features(const manifest::DatasetManifest& m, const fs::path& dir, int bdi_threshold = 14);

/// Writes 4 augmented recordings per train row (participant speech only,
/// ids suffixed _noise/_pitch/_shift/_speed) and manifest.csv under
/// `out_dir`. Original rows are kept; val/test rows are untouched.
manifest::DatasetManifest augment_manifest(const manifest::DatasetManifest& m, const config::RunConfig& cfg,
                                           const fs::path& out_dir);

/// Trains on the train split of `features`, validating on val.
dataset::TrainedModel train_features(const FeatureSet& features, const config::RunConfig& cfg,
                                     model::HeadKind head);

/// Emotion pretraining, then freeze + dense training on the target features.
model::Checkpoint finetune_features(const model::Checkpoint& pretrained, const FeatureSet& target,
                                    const config::RunConfig& cfg, model::TrainResult* result = nullptr);

nlohmann::json prediction_json(const model::Checkpoint& ckpt, const audio::SegmentSet& segments,
                               bool with_timing = true);

struct Options {
  fs::path manifest;
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::string experiment = "basic";
  fs::path features;
  fs::path checkpoint;
  fs::path pretrained;
  fs::path foreign;
  fs::path wav;
  fs::path transcript;
  std::string split;
  std::string task = "all";
  std::string granularity = "clip";
  std::string scheme = "binary2";
  int participants = 20;
  double duration_s = 20.0;
  std::vector<std::string> settings;  // key=value overrides
};

/// Config file (if any), then --set overrides, then --seed.
config::RunConfig resolve_config(const Options& o, std::ostream& log);

int cmd_extract(const Options& o, std::ostream& out, std::ostream& log);
int cmd_augment(const Options& o, std::ostream& out, std::ostream& log);
int cmd_train(const Options& o, std::ostream& out, std::ostream& log);
int cmd_pretrain(const Options& o, std::ostream& out, std::ostream& log);
int cmd_finetune(const Options& o, std::ostream& out, std::ostream& log);
int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& log);
int cmd_predict(const Options& o, std::ostream& out, std::ostream& log);
int cmd_synth(const Options& o, std::ostream& out, std::ostream& log);

}  // namespace sdr::pipeline
