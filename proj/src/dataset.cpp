#include "sdr/dataset.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "sdr/binio.hpp"
#include "sdr/errors.hpp"

namespace sdr::dataset {

using manifest::LabelKind;
using manifest::Split;

model::HeadKind head_for(LabelKind kind) {
  switch (kind) {
    case LabelKind::Phq8Binary:
    case LabelKind::Bdi2: return model::HeadKind::Phq8Binary;
    case LabelKind::Phq8Score: return model::HeadKind::Phq8Score;
    case LabelKind::Emotion8: return model::HeadKind::Emotion8;
  }
  return model::HeadKind::Phq8Binary;
}

int model_label(const manifest::ManifestRow& row, int bdi_threshold) {
  return row.label_kind == LabelKind::Bdi2 ? manifest::binarize_bdi(row.label_value, bdi_threshold)
                                           : row.label_value;
}

audio::SegmentSet load_segments(const manifest::DatasetManifest& m, const manifest::ManifestRow& row,
                                double min_segment_s) {
  const audio::AudioSignal signal = audio::read_wav(m.resolve(row.wav_path));
  std::vector<audio::TranscriptTurn> turns;
  if (row.transcript_path.empty()) {
    turns.push_back({0.0, std::max(signal.duration_seconds(), 1e-9), audio::Speaker::Participant});
  } else {
    try {
      turns = audio::parse_transcript(binio::read_text(m.resolve(row.transcript_path)));
    } catch (const ParseError& e) {
      throw ParseError(row.transcript_path + ": " + e.what());
    }
  }
  return audio::extract_participant_segments(signal, turns, row.id, min_segment_s);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(config::thread_budget(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

Extraction extract_manifest(const manifest::DatasetManifest& m, const config::RunConfig& cfg, bool keep_going) {
  const std::size_t n = m.rows.size();
  std::vector<std::optional<ParticipantData>> slots(n);
  std::vector<std::string> errors(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& row = m.rows[i];
    try {
      ParticipantData p;
      p.row = row;
      p.label = model_label(row, cfg.experiment.bdi_threshold);
      p.features = dsp::extract_features(load_segments(m, row, cfg.min_segment_s), cfg.frame);
      slots[i] = std::move(p);
    } catch (const Error& e) {
      if (!keep_going) throw;
      errors[i] = e.what();
    }
  });
  Extraction out;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      out.participants.push_back(std::move(*slots[i]));
    } else {
      out.failures.push_back({m.rows[i].id, errors[i]});
    }
  }
  return out;
}

dsp::NormStats round_to_float(const dsp::NormStats& stats) {
  dsp::NormStats out;
  out.mean = stats.mean.cast<float>().cast<double>();
  out.std = stats.std.cast<float>().cast<double>();
  return out;
}

dsp::NormStats fit_train_norm(std::span<const ParticipantData> participants) {
  std::vector<const dsp::FeatureMatrix*> parts;
  for (const auto& p : participants)
    if (p.row.split == Split::Train) parts.push_back(&p.features);
  if (parts.empty()) throw InsufficientDataError("no training rows to fit normalization on");
  return round_to_float(dsp::fit_norm_stats(std::span<const dsp::FeatureMatrix* const>(parts)));
}

void normalize(std::vector<ParticipantData>& participants, const dsp::NormStats& stats) {
  for (auto& p : participants) p.features = dsp::apply_norm(p.features, stats);
}

std::vector<model::Sample> clip_samples(const dsp::FeatureMatrix& features, int label,
                                        const std::string& participant) {
  std::vector<model::Sample> out;
  for (const auto& clip : dsp::clip_ranges(features)) {
    model::Sample s;
    s.seq = features.values.middleRows(clip.first_row, clip.rows).cast<model::Real>();
    s.label = label;
    s.participant = participant;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<model::Sample> to_samples(std::span<const ParticipantData> participants) {
  std::vector<model::Sample> out;
  for (const auto& p : participants) {
    auto s = clip_samples(p.features, p.label, p.row.id);
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return out;
}

std::vector<model::Sample> to_samples(std::span<const ParticipantData> participants, Split split) {
  return to_samples(select(participants, split));
}

std::vector<ParticipantData> select(std::span<const ParticipantData> participants, Split split) {
  std::vector<ParticipantData> out;
  for (const auto& p : participants)
    if (p.row.split == split) out.push_back(p);
  return out;
}

TrainedModel train_from_manifest(const manifest::DatasetManifest& m, const config::RunConfig& cfg) {
  if (m.rows.empty()) throw InsufficientDataError("empty manifest");
  const LabelKind kind = m.rows.front().label_kind;
  for (const auto& r : m.rows)
    if (r.label_kind != kind) throw LabelError("manifest mixes label kinds");

  TrainedModel out;
  out.participants = extract_manifest(m, cfg).participants;
  const dsp::NormStats norm = fit_train_norm(out.participants);
  normalize(out.participants, norm);

  model::ArchitectureSpec arch = cfg.arch;
  arch.head = head_for(kind);
  arch.input_dim = cfg.frame.feature_dim();
  out.checkpoint = model::build_model(arch, cfg.training.seed);
  out.checkpoint.norm = norm;
  out.checkpoint.frame = cfg.frame;

  const auto train = to_samples(out.participants, Split::Train);
  const auto val = to_samples(out.participants, Split::Val);
  out.result = model::train(out.checkpoint, train, val, cfg.train_config());
  return out;
}

}  // namespace sdr::dataset
