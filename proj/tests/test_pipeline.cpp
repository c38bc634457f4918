#include <doctest.h>

#include <sstream>

#include "sdr/binio.hpp"
#include "sdr/errors.hpp"
#include "sdr/pipeline.hpp"
#include "sdr/synth.hpp"
#include "support.hpp"

using namespace sdr;
using namespace sdr::pipeline;
using manifest::Split;

namespace {

const fs::path& corpus() {
  static const fs::path dir = [] {
    const auto d = testing::scratch_dir("pipeline_corpus");
    synth::SynthSpec spec;
    spec.n_participants = 20;
    spec.duration_s = 8;
    spec.seed = 2;
    synth::generate(spec, d);
    return d;
  }();
  return dir;
}

std::vector<std::string> small_model() {
  return {"arch.lstm_units=8,6", "arch.dense_units=5", "train.epochs=3", "train.batch=130"};
}

}  // namespace

TEST_CASE("extract writes normalized features and train-only stats") {
  const auto m = manifest::load_manifest(corpus() / "manifest.csv");
  const auto out = testing::scratch_dir("pipeline_extract");
  const config::RunConfig cfg;
  const auto summary = extract_to_dir(m, cfg, out);
  CHECK(summary.written == 20);
  CHECK(summary.failures.empty());
  for (const auto& r : m.rows) CHECK(fs::exists(out / (r.id + ".fmx")));

  // norm oracle: plain per-column mean and population std over raw train frames
  const auto raw = dataset::extract_manifest(m, cfg).participants;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(60), sq = Eigen::VectorXd::Zero(60);
  double n = 0;
  for (const auto& p : raw) {
    if (p.row.split != Split::Train) continue;
    for (Eigen::Index i = 0; i < p.features.rows(); ++i) {
      for (Eigen::Index c = 0; c < 60; ++c) sum(c) += p.features.values(i, c);
      n += 1;
    }
  }
  const Eigen::VectorXd mean = sum / n;
  for (const auto& p : raw) {
    if (p.row.split != Split::Train) continue;
    for (Eigen::Index i = 0; i < p.features.rows(); ++i)
      for (Eigen::Index c = 0; c < 60; ++c) sq(c) += std::pow(p.features.values(i, c) - mean(c), 2);
  }
  const auto norm = dsp::load_nrm(out / kNormFile);
  for (Eigen::Index c = 0; c < 60; ++c) {
    CHECK(norm.mean(c) == doctest::Approx(mean(c)).epsilon(1e-6));
    CHECK(norm.std(c) == doctest::Approx(std::sqrt(sq(c) / n)).epsilon(1e-6));
  }

  const auto fs1 = load_features(m, out);
  CHECK(fs1.participants.size() == 20);
  CHECK(fs1.norm.mean == norm.mean);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto expect = dsp::apply_norm(raw[i].features, norm);
    CHECK((fs1.participants[i].features.values - expect.values).cwiseAbs().maxCoeff() < 1e-5);
  }

  SUBCASE("idempotent") {
    const auto again = testing::scratch_dir("pipeline_extract_again");
    extract_to_dir(m, cfg, again);
    for (const auto& r : m.rows)
      CHECK(binio::read_file(out / (r.id + ".fmx")) == binio::read_file(again / (r.id + ".fmx")));
    CHECK(binio::read_file(out / kNormFile) == binio::read_file(again / kNormFile));
  }

  SUBCASE("held-out audio does not leak into the stats") {
    auto altered = m;
    for (auto& r : altered.rows)
      if (r.split != Split::Train) r.wav_path = m.rows[0].wav_path;
    const auto dir = testing::scratch_dir("pipeline_leak");
    extract_to_dir(altered, cfg, dir);
    CHECK(binio::read_file(out / kNormFile) == binio::read_file(dir / kNormFile));
  }

  SUBCASE("missing features are reported") {
    auto extra = m;
    extra.rows.push_back(m.rows[0]);
    extra.rows.back().id = "ghost";
    CHECK_THROWS_AS(load_features(extra, out), ArgumentError);
    CHECK_THROWS_AS(load_features(m, out / "nope"), ArgumentError);
  }
}

TEST_CASE("extract keeps going past bad rows") {
  auto m = manifest::load_manifest(corpus() / "manifest.csv");
  m.rows[3].wav_path = "wav/missing.wav";
  const auto out = testing::scratch_dir("pipeline_bad");
  const auto summary = extract_to_dir(m, config::RunConfig{}, out);
  CHECK(summary.written == 19);
  REQUIRE(summary.failures.size() == 1);
  CHECK(summary.failures[0].id == m.rows[3].id);
}

TEST_CASE("augmentation quintuples the train split") {
  const auto m = manifest::load_manifest(corpus() / "manifest.csv");
  CHECK(m.indices(Split::Train).size() == 16);
  const auto out = testing::scratch_dir("pipeline_aug");
  config::RunConfig cfg;
  const auto aug = augment_manifest(m, cfg, out);
  CHECK(aug.indices(Split::Train).size() == 80);
  CHECK(aug.indices(Split::Val).size() == m.indices(Split::Val).size());
  CHECK(aug.indices(Split::Test).size() == m.indices(Split::Test).size());
  const auto reloaded = manifest::load_manifest(out / "manifest.csv");
  CHECK(manifest::format_manifest(reloaded) == manifest::format_manifest(aug));
  for (const auto& r : reloaded.rows) CHECK(fs::exists(reloaded.resolve(r.wav_path)));
  int noise = 0;
  for (const auto& r : aug.rows) noise += r.id.ends_with("_noise");
  CHECK(noise == 16);

  const auto again = augment_manifest(m, cfg, testing::scratch_dir("pipeline_aug2"));
  for (std::size_t i = 0; i < aug.rows.size(); ++i)
    CHECK(binio::read_file(aug.resolve(aug.rows[i].wav_path)) == binio::read_file(again.resolve(again.rows[i].wav_path)));
}

TEST_CASE("command functions") {
  const auto work = testing::scratch_dir("pipeline_cmd");
  std::ostringstream out, log;
  Options o;
  o.manifest = corpus() / "manifest.csv";
  o.out = work / "feat";
  CHECK(cmd_extract(o, out, log) == 0);

  o.features = work / "feat";
  o.out = work / "model.ckpt";
  o.settings = small_model();
  o.seed = 4;
  out.str("");
  CHECK(cmd_train(o, out, log) == 0);
  const auto summary = nlohmann::json::parse(out.str());
  CHECK(summary.at("epochs") == 3);
  CHECK(fs::exists(work / "model.history.json"));
  CHECK(fs::exists(work / "model.history.csv"));
  const auto ckpt = model::load_checkpoint(work / "model.ckpt");
  CHECK(ckpt.net.lstm.size() == 2);
  CHECK(ckpt.net.arch.lstm_units == std::vector<int>{8, 6});

  Options e;
  e.manifest = o.manifest;
  e.checkpoint = work / "model.ckpt";
  e.granularity = "participant";
  out.str("");
  CHECK(cmd_evaluate(e, out, log) == 0);
  const auto rep = nlohmann::json::parse(out.str());
  CHECK(rep.at("experiment") == "basic");
  CHECK(rep.at("reports")[0].at("samples") == 2);
  CHECK(rep.at("reports")[0].at("granularity") == "participant");

  e.experiment = "noise";
  e.granularity = "clip";
  out.str("");
  CHECK(cmd_evaluate(e, out, log) == 0);
  CHECK(nlohmann::json::parse(out.str()).at("reports").size() == 3);
  e.experiment = "bogus";
  CHECK_THROWS_AS(cmd_evaluate(e, out, log), ArgumentError);

  Options p;
  p.checkpoint = work / "model.ckpt";
  p.wav = corpus() / "wav" / "P000.wav";
  p.transcript = corpus() / "transcripts" / "P000.tsv";
  out.str("");
  CHECK(cmd_predict(p, out, log) == 0);
  const auto pred = nlohmann::json::parse(out.str());
  CHECK(pred.at("source_id") == "P000");
  CHECK(pred.at("clip_count").get<int>() == static_cast<int>(pred.at("clips").size()));
  CHECK(pred.at("participant").at("votes").size() == 2);
  CHECK(pred.contains("timing"));

  Options missing;
  CHECK_THROWS_AS(cmd_train(missing, out, log), ArgumentError);
  o.settings.push_back("train.epoch=1");
  CHECK_THROWS_AS(cmd_train(o, out, log), ArgumentError);
}

TEST_CASE("pretrain then finetune keeps the recurrent stack") {
  const auto work = testing::scratch_dir("pipeline_transfer");
  synth::SynthSpec spec;
  spec.scheme = synth::ClassScheme::Emotion8;
  spec.n_participants = 16;
  spec.duration_s = 6;
  synth::generate(spec, work / "emo");
  std::ostringstream out, log;

  Options o;
  o.manifest = work / "emo" / "manifest.csv";
  o.out = work / "emo_feat";
  CHECK(cmd_extract(o, out, log) == 0);
  o.features = work / "emo_feat";
  o.out = work / "pre.ckpt";
  o.settings = small_model();
  CHECK(cmd_pretrain(o, out, log) == 0);
  const auto pre = model::load_checkpoint(work / "pre.ckpt");
  CHECK(pre.net.arch.head == model::HeadKind::Emotion8);

  Options f;
  f.manifest = corpus() / "manifest.csv";
  f.out = work / "bin_feat";
  CHECK(cmd_extract(f, out, log) == 0);
  f.features = work / "bin_feat";
  f.pretrained = work / "pre.ckpt";
  f.out = work / "ft.ckpt";
  f.settings = small_model();
  out.str("");
  CHECK(cmd_finetune(f, out, log) == 0);
  const auto ft = model::load_checkpoint(work / "ft.ckpt");
  CHECK(model::lstm_stack_hash(ft.net) == model::lstm_stack_hash(pre.net));
  CHECK(ft.net.arch.head == model::HeadKind::Phq8Binary);
  CHECK(nlohmann::json::parse(out.str()).contains("lstm_hash"));

  Options wrong = o;
  wrong.manifest = corpus() / "manifest.csv";
  wrong.features = work / "bin_feat";
  CHECK_THROWS_AS(cmd_pretrain(wrong, out, log), LabelError);
}

TEST_CASE("config resolution") {
  std::ostringstream log;
  Options o;
  o.seed = 42;
  o.settings = {"train.batch=64"};
  const auto cfg = resolve_config(o, log);
  CHECK(cfg.training.seed == 42);
  CHECK(cfg.augment.rng_seed == 42);
  CHECK(log.str().find("warning") != std::string::npos);
  o.settings = {"train.batch"};
  CHECK_THROWS_AS(resolve_config(o, log), ArgumentError);
}
