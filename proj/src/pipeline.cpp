#include "sdr/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <fstream>
#include <ostream>

#include "sdr/augment.hpp"
#include "sdr/binio.hpp"
#include "sdr/errors.hpp"
#include "sdr/rng.hpp"
#include "sdr/synth.hpp"

namespace sdr::pipeline {

using manifest::Split;

ExtractSummary extract_to_dir(const manifest::DatasetManifest& m, const config::RunConfig& cfg,
                              const fs::path& out_dir) {
  auto ex = dataset::extract_manifest(m, cfg, /*keep_going=*/true);
  const dsp::NormStats norm = dataset::fit_train_norm(ex.participants);
  dataset::normalize(ex.participants, norm);
  fs::create_directories(out_dir);
  dsp::save_nrm(out_dir / kNormFile, norm);
  dataset::parallel_for(ex.participants.size(), [&](std::size_t i) {
    const auto& p = ex.participants[i];
    dsp::save_fmx(out_dir / (p.row.id + ".fmx"), p.features, cfg.frame);
  });
  return {ex.participants.size(), std::move(ex.failures)};
}

FeatureSet load_features(const manifest::DatasetManifest& m, const fs::path& dir, int bdi_threshold) {
  if (dir.empty() || !fs::is_directory(dir)) throw ArgumentError("features directory '" + dir.string() + "' not found");
  if (!fs::exists(dir / kNormFile)) throw ArgumentError("missing " + (dir / kNormFile).string());
  FeatureSet fs_out;
  fs_out.norm = dsp::load_nrm(dir / kNormFile);
  fs_out.participants.resize(m.rows.size());
  std::vector<dsp::FrameSpec> specs(m.rows.size());
  dataset::parallel_for(m.rows.size(), [&](std::size_t i) {
    const auto& row = m.rows[i];
    const fs::path path = dir / (row.id + ".fmx");
    if (!fs::exists(path)) throw ArgumentError("missing features for '" + row.id + "' (" + path.string() + ")");
    auto& p = fs_out.participants[i];
    p.row = row;
    p.label = dataset::model_label(row, bdi_threshold);
    p.features = dsp::load_fmx(path, &specs[i]);
  });
  if (!specs.empty()) {
    fs_out.frame = specs.front();
    for (const auto& s : specs)
      if (nlohmann::json(s) != nlohmann::json(fs_out.frame))
        throw FormatError("feature files were extracted with different frame specs");
  }
  return fs_out;
}

manifest::DatasetManifest augment_manifest(const manifest::DatasetManifest& m, const config::RunConfig& cfg,
                                           const fs::path& out_dir) {
  if (m.indices(Split::Train).empty()) throw InsufficientDataError("no train rows to augment");
  fs::create_directories(out_dir);
  const fs::path base = fs::absolute(out_dir);

  std::vector<std::vector<manifest::ManifestRow>> produced(m.rows.size());
  dataset::parallel_for(m.rows.size(), [&](std::size_t i) {
    manifest::ManifestRow row = m.rows[i];
    const fs::path wav = fs::absolute(m.resolve(row.wav_path));
    row.wav_path = fs::relative(wav, base).generic_string();
    if (!row.transcript_path.empty())
      row.transcript_path = fs::relative(fs::absolute(m.resolve(row.transcript_path)), base).generic_string();
    produced[i].push_back(row);
    if (m.rows[i].split != Split::Train) return;

    augment::AugmentConfig ac = cfg.augment;
    ac.rng_seed = derive_seed(cfg.augment.rng_seed, "augment", i);
    const auto segments = dataset::load_segments(m, m.rows[i], cfg.min_segment_s);
    const auto aug = augment::augment_dataset(segments, ac);
    for (const auto tech : augment::kTechniques) {
      audio::SegmentSet part;
      part.source_id = row.id;
      for (std::size_t s = 0; s < aug.set.segments.size(); ++s)
        if (aug.technique[s] == tech) part.segments.push_back(aug.set.segments[s]);
      const auto [joined, turns] = audio::join_segments(part);
      manifest::ManifestRow out = m.rows[i];
      out.id = m.rows[i].id + "_" + std::string(augment::technique_name(tech));
      out.wav_path = "wav/" + out.id + ".wav";
      out.transcript_path = "transcripts/" + out.id + ".tsv";
      audio::write_wav(base / out.wav_path, joined);
      binio::write_text(base / out.transcript_path, audio::format_transcript(turns));
      produced[i].push_back(out);
    }
  });

  manifest::DatasetManifest out;
  out.base_dir = base;
  for (auto& rows : produced)
    for (auto& r : rows) out.rows.push_back(std::move(r));
  out.validate();
  manifest::save_manifest(base / "manifest.csv", out);
  return out;
}

namespace {

model::ArchitectureSpec arch_for(const config::RunConfig& cfg, const dsp::FrameSpec& frame, model::HeadKind head) {
  model::ArchitectureSpec arch = cfg.arch;
  arch.head = head;
  arch.input_dim = frame.feature_dim();
  return arch;
}

model::HeadKind single_head(const manifest::DatasetManifest& m) {
  if (m.rows.empty()) throw InsufficientDataError("empty manifest");
  const auto kind = m.rows.front().label_kind;
  for (const auto& r : m.rows)
    if (r.label_kind != kind) throw LabelError("manifest mixes label kinds");
  return dataset::head_for(kind);
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

void write_history(const fs::path& ckpt_path, const model::TrainResult& r) {
  binio::write_text(with_suffix(ckpt_path, ".history.json"), model::history_to_json(r).dump(2) + "\n");
  binio::write_text(with_suffix(ckpt_path, ".history.csv"), model::history_to_csv(r));
}

nlohmann::json train_summary(const fs::path& ckpt_path, const model::Checkpoint& ckpt, const model::TrainResult& r) {
  nlohmann::json j;
  j["checkpoint"] = ckpt_path.generic_string();
  j["task"] = model::head_name(ckpt.net.arch.head);
  j["parameters"] = ckpt.net.parameter_count();
  j["epochs"] = r.history.size();
  j["best_epoch"] = r.best_epoch;
  if (!r.history.empty()) {
    const auto& last = r.history.back();
    j["final"] = {{"train_rmse", last.train_rmse}, {"train_accuracy", last.train_accuracy}, {"lr", last.lr}};
    if (!std::isnan(last.val_rmse)) {
      j["final"]["val_rmse"] = last.val_rmse;
      j["final"]["val_accuracy"] = last.val_accuracy;
    }
  }
  return j;
}

void write_json(const Options& o, std::ostream& out, const nlohmann::json& j) {
  if (o.out.empty()) {
    out << j.dump(2) << '\n';
  } else {
    binio::write_text(o.out, j.dump(2) + "\n");
  }
}

void require(const fs::path& p, const char* flag) {
  if (p.empty()) throw ArgumentError(std::string(flag) + " is required");
}

}  // namespace

dataset::TrainedModel train_features(const FeatureSet& features, const config::RunConfig& cfg, model::HeadKind head) {
  dataset::TrainedModel out;
  out.checkpoint = model::build_model(arch_for(cfg, features.frame, head), cfg.training.seed);
  out.checkpoint.norm = features.norm;
  out.checkpoint.frame = features.frame;
  out.participants = features.participants;
  const auto train = dataset::to_samples(out.participants, Split::Train);
  const auto val = dataset::to_samples(out.participants, Split::Val);
  out.result = model::train(out.checkpoint, train, val, cfg.train_config());
  return out;
}

model::Checkpoint finetune_features(const model::Checkpoint& pretrained, const FeatureSet& target,
                                    const config::RunConfig& cfg, model::TrainResult* result) {
  if (nlohmann::json(pretrained.frame) != nlohmann::json(target.frame))
    throw ArchError("target features use a different frame spec than the pretrained model");
  if (target.participants.empty()) throw InsufficientDataError("no target participants");
  const auto head = dataset::head_for(target.participants.front().row.label_kind);
  const auto train = dataset::to_samples(target.participants, Split::Train);
  const auto val = dataset::to_samples(target.participants, Split::Val);
  model::Checkpoint ckpt = model::fine_tune(pretrained, head, train, val, cfg.train_config(), result);
  ckpt.norm = target.norm;
  return ckpt;
}

nlohmann::json prediction_json(const model::Checkpoint& ckpt, const audio::SegmentSet& segments, bool with_timing) {
  using Clock = std::chrono::steady_clock;
  dsp::FeatureMatrix f = dsp::apply_norm(dsp::extract_features(segments, ckpt.frame), ckpt.norm);
  const auto clips = dsp::clip_ranges(f);
  const int k = model::head_size(ckpt.net.arch.head);
  std::vector<int> votes(static_cast<std::size_t>(k), 0);
  std::vector<double> mean(static_cast<std::size_t>(k), 0.0);
  nlohmann::json jclips = nlohmann::json::array();
  double total_ms = 0, max_ms = 0;
  for (const auto& c : clips) {
    const model::Matrix<model::Real> seq = f.values.middleRows(c.first_row, c.rows).cast<model::Real>();
    const auto t0 = Clock::now();
    const model::Prediction p = model::forward(ckpt, seq);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    total_ms += ms;
    max_ms = std::max(max_ms, ms);
    ++votes[static_cast<std::size_t>(p.predicted_class)];
    for (int i = 0; i < k; ++i) mean[static_cast<std::size_t>(i)] += p.scores[static_cast<std::size_t>(i)];
    jclips.push_back({{"segment", c.segment}, {"clip", c.clip}, {"scores", p.scores}, {"predicted_class", p.predicted_class}});
  }
  for (auto& v : mean) v /= static_cast<double>(std::max<std::size_t>(clips.size(), 1));
  std::vector<double> vote_scores(votes.begin(), votes.end());
  const auto names = eval::class_names(ckpt.net.arch.head);
  const int winner = model::argmax(vote_scores);
  nlohmann::json j;
  j["task"] = model::head_name(ckpt.net.arch.head);
  j["source_id"] = segments.source_id;
  j["clip_count"] = clips.size();
  j["clips"] = jclips;
  j["participant"] = {{"predicted_class", winner},
                      {"class_name", names.at(static_cast<std::size_t>(winner))},
                      {"votes", votes},
                      {"mean_scores", mean}};
  if (with_timing) {
    j["timing"] = {{"total_ms", total_ms},
                   {"mean_clip_ms", clips.empty() ? 0.0 : total_ms / static_cast<double>(clips.size())},
                   {"max_clip_ms", max_ms}};
  }
  return j;
}

config::RunConfig resolve_config(const Options& o, std::ostream& log) {
  config::RunConfig cfg = o.config.empty() ? config::RunConfig{} : config::load_config(o.config);
  for (const auto& kv : o.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + kv + "'");
    try {
      config::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    } catch (const ParseError& e) {
      throw ArgumentError(std::string("--set: ") + e.what());
    }
  }
  if (o.seed) {
    cfg.training.seed = *o.seed;
    cfg.augment.rng_seed = *o.seed;
  }
  cfg.validate();
  for (const auto& w : cfg.warnings()) log << "warning: " << w << '\n';
  return cfg;
}

int cmd_extract(const Options& o, std::ostream& out, std::ostream& log) {
  require(o.manifest, "--manifest");
  require(o.out, "--out");
  const auto cfg = resolve_config(o, log);
  const auto m = manifest::load_manifest(o.manifest);
  const auto summary = extract_to_dir(m, cfg, o.out);
  for (const auto& f : summary.failures) log << "error: " << f.id << ": " << f.message << '\n';
  out << "extracted " << summary.written << " of " << m.rows.size() << " rows, " << summary.failures.size()
      << " failed\n";
  return summary.failures.empty() ? 0 : 2;
}

int cmd_augment(const Options& o, std::ostream& out, std::ostream& log) {
  require(o.manifest, "--manifest");
  require(o.out, "--out");
  const auto cfg = resolve_config(o, log);
  const auto m = manifest::load_manifest(o.manifest);
  const auto aug = augment_manifest(m, cfg, o.out);
  out << "augmented " << m.indices(Split::Train).size() << " train rows to " << aug.indices(Split::Train).size()
      << "; wrote " << (o.out / "manifest.csv").generic_string() << '\n';
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& log) {
  require(o.manifest, "--manifest");
  require(o.out, "--out");
  const auto cfg = resolve_config(o, log);
  const auto m = manifest::load_manifest(o.manifest);
  const auto head = single_head(m);
  const auto features = load_features(m, o.features, cfg.experiment.bdi_threshold);
  const auto trained = train_features(features, cfg, head);
  model::save_checkpoint(o.out, trained.checkpoint);
  write_history(o.out, trained.result);
  out << train_summary(o.out, trained.checkpoint, trained.result).dump(2) << '\n';
  return 0;
}

int cmd_pretrain(const Options& o, std::ostream& out, std::ostream& log) {
  require(o.manifest, "--manifest");
  require(o.out, "--out");
  const auto cfg = resolve_config(o, log);
  const auto m = manifest::load_manifest(o.manifest);
  if (single_head(m) != model::HeadKind::Emotion8) throw LabelError("pretraining needs emotion8 labels");
  const auto features = load_features(m, o.features, cfg.experiment.bdi_threshold);
  const auto train = dataset::to_samples(features.participants, Split::Train);
  const auto val = dataset::to_samples(features.participants, Split::Val);
  model::TrainResult result;
  model::Checkpoint ckpt = model::pretrain_emotion(arch_for(cfg, features.frame, model::HeadKind::Emotion8), train,
                                                   val, cfg.train_config(), &result);
  ckpt.norm = features.norm;
  ckpt.frame = features.frame;
  model::save_checkpoint(o.out, ckpt);
  write_history(o.out, result);
  out << train_summary(o.out, ckpt, result).dump(2) << '\n';
  return 0;
}

int cmd_finetune(const Options& o, std::ostream& out, std::ostream& log) {
  require(o.manifest, "--manifest");
  require(o.out, "--out");
  require(o.pretrained, "--pretrained");
  const auto cfg = resolve_config(o, log);
  const auto m = manifest::load_manifest(o.manifest);
  single_head(m);
  const auto pretrained = model::load_checkpoint(o.pretrained);
  const auto features = load_features(m, o.features, cfg.experiment.bdi_threshold);
  model::TrainResult result;
  const auto ckpt = finetune_features(pretrained, features, cfg, &result);
  const auto before = model::lstm_stack_hash(pretrained.net);
  const auto after = model::lstm_stack_hash(ckpt.net);
  if (before != after) throw std::logic_error("fine-tuning modified the frozen LSTM stack");
  model::save_checkpoint(o.out, ckpt);
  write_history(o.out, result);
  auto j = train_summary(o.out, ckpt, result);
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(after));
  j["lstm_hash"] = hash;
  out << j.dump(2) << '\n';
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& log) {
  require(o.manifest, "--manifest");
  auto cfg = resolve_config(o, log);
  if (!o.split.empty() && o.split != "all") cfg.experiment.eval_split = manifest::split_from(o.split);
  const auto g = eval::granularity_from(o.granularity);
  const auto m = manifest::load_manifest(o.manifest);

  nlohmann::json j;
  j["experiment"] = o.experiment;
  j["reports"] = nlohmann::json::array();
  std::vector<eval::EvalReport> reports;

  if (o.experiment == "gender") {
    auto [female, male] = eval::run_gender_split(m, cfg);
    reports = {female, male};
  } else {
    require(o.checkpoint, "--checkpoint");
    const auto ckpt = model::load_checkpoint(o.checkpoint);
    if (o.experiment == "generalize") {
      const std::vector<std::string> tasks =
          o.task == "all" ? std::vector<std::string>{"taskA", "taskB", "both"} : std::vector<std::string>{o.task};
      for (const auto& t : tasks) reports.push_back(eval::run_generalization(ckpt, m, t, cfg));
    } else if (o.experiment == "basic" || o.experiment == "noise") {
      if (single_head(m) != ckpt.net.arch.head)
        throw LabelError("manifest labels do not match the " + model::head_name(ckpt.net.arch.head) + " model");
      const auto subset = o.split == "all"
                              ? m
                              : m.where([&](const manifest::ManifestRow& r) { return r.split == cfg.experiment.eval_split; });
      const auto parts = eval::prepare(ckpt, subset, cfg);
      const std::string split_name = o.split == "all" ? "all" : manifest::to_string(cfg.experiment.eval_split);
      if (o.experiment == "basic") {
        auto r = eval::evaluate(ckpt.net, parts, g);
        r.metadata = {{"experiment", "basic"}, {"split", split_name}};
        reports.push_back(std::move(r));
      } else {
        reports = eval::run_noise_robustness(ckpt, parts, cfg.experiment.noise_fractions, cfg.experiment.noise_sigma,
                                             derive_seed(cfg.training.seed, "noise", 0), g);
        for (auto& r : reports) r.metadata["split"] = split_name;
      }
    } else {
      throw ArgumentError("unknown experiment '" + o.experiment + "'");
    }
  }
  for (const auto& r : reports) {
    j["reports"].push_back(eval::to_json(r));
    log << r.metadata.dump() << "\naccuracy " << r.accuracy << "  rmse " << r.rmse << "  n=" << r.samples() << '\n'
        << eval::render_confusion(r.cm);
  }
  write_json(o, out, j);
  return 0;
}

int cmd_predict(const Options& o, std::ostream& out, std::ostream& log) {
  require(o.checkpoint, "--checkpoint");
  require(o.wav, "--wav");
  const auto cfg = resolve_config(o, log);
  const auto ckpt = model::load_checkpoint(o.checkpoint);
  const auto signal = audio::read_wav(o.wav);
  std::vector<audio::TranscriptTurn> turns;
  if (o.transcript.empty()) {
    turns.push_back({0.0, std::max(signal.duration_seconds(), 1e-9), audio::Speaker::Participant});
  } else {
    turns = audio::parse_transcript(binio::read_text(o.transcript));
  }
  const auto segments = audio::extract_participant_segments(signal, turns, o.wav.stem().string(), cfg.min_segment_s);
  write_json(o, out, prediction_json(ckpt, segments));
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out, std::ostream& log) {
  require(o.out, "--out");
  (void)log;
  synth::SynthSpec spec;
  spec.scheme = synth::scheme_from(o.scheme);
  spec.n_participants = o.participants;
  spec.duration_s = o.duration_s;
  spec.seed = o.seed.value_or(0);
  const auto m = synth::generate(spec, o.out);
  out << "wrote " << m.rows.size() << " participants (" << synth::to_string(spec.scheme) << ") to "
      << (o.out / "manifest.csv").generic_string() << '\n';
  return 0;
}

}  // namespace sdr::pipeline
