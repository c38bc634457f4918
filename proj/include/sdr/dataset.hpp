#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdr/config.hpp"
#include "sdr/dsp.hpp"
#include "sdr/manifest.hpp"
#include "sdr/model.hpp"

namespace sdr::dataset {

/// One manifest row with its (raw or normalized) features.
struct ParticipantData {
  manifest::ManifestRow row;
  int label = 0;  // label as the model sees it
  dsp::FeatureMatrix features;
};

struct RowFailure {
  std::string id;
  std::string message;
};

struct Extraction {
  std::vector<ParticipantData> participants;  // manifest order, failed rows omitted
  std::vector<RowFailure> failures;
};

/// Head a label kind trains (BDI-II is evaluated as binary).
model::HeadKind head_for(manifest::LabelKind kind);

/// Model label for a row; BDI-II scores are binarized at `bdi_threshold`.
int model_label(const manifest::ManifestRow& row, int bdi_threshold = 14);

/// WAV + transcript -> participant segments. Without a transcript the whole
/// recording counts as participant speech.
audio::SegmentSet load_segments(const manifest::DatasetManifest& m, const manifest::ManifestRow& row,
                                double min_segment_s);

/// Raw features for every row, extracted in parallel (SDR_THREADS). With
/// `keep_going`, per-row errors are collected instead of thrown.
Extraction extract_manifest(const manifest::DatasetManifest& m, const config::RunConfig& cfg,
                            bool keep_going = false);

/// Norm stats over the train-split participants only, rounded to float32 so
/// the persisted .nrm reproduces them exactly.
dsp::NormStats fit_train_norm(std::span<const ParticipantData> participants);
dsp::NormStats round_to_float(const dsp::NormStats& stats);
void normalize(std::vector<ParticipantData>& participants, const dsp::NormStats& stats);

/// One model sample per clip of `features`.
std::vector<model::Sample> clip_samples(const dsp::FeatureMatrix& features, int label,
                                        const std::string& participant);
std::vector<model::Sample> to_samples(std::span<const ParticipantData> participants);
std::vector<model::Sample> to_samples(std::span<const ParticipantData> participants, manifest::Split split);

std::vector<ParticipantData> select(std::span<const ParticipantData> participants, manifest::Split split);

/// Runs `fn(i)` for i in [0, n) on up to thread_budget() workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct TrainedModel {
  model::Checkpoint checkpoint;
  model::TrainResult result;
  std::vector<ParticipantData> participants;  // normalized with checkpoint.norm
};

/// extract -> fit norm on train -> normalize -> build -> train, all from
/// one config. The head follows the manifest's label kind.
TrainedModel train_from_manifest(const manifest::DatasetManifest& m, const config::RunConfig& cfg);

}  // namespace sdr::dataset
