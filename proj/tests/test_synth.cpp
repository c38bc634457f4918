#include <doctest.h>

#include <map>

#include "sdr/binio.hpp"
#include "sdr/dataset.hpp"
#include "sdr/errors.hpp"
#include "sdr/synth.hpp"
#include "support.hpp"

using namespace sdr;
using namespace sdr::synth;

TEST_CASE("scheme names") {
  for (auto s : {ClassScheme::Binary2, ClassScheme::Severity24, ClassScheme::Emotion8, ClassScheme::Bdi})
    CHECK(scheme_from(to_string(s)) == s);
  CHECK(class_count(ClassScheme::Severity24) == 24);
  CHECK(class_count(ClassScheme::Emotion8) == 8);
  CHECK(label_kind(ClassScheme::Bdi) == manifest::LabelKind::Bdi2);
  CHECK_THROWS_AS(scheme_from("ternary"), ArgumentError);
}

TEST_CASE("stratified 80/10/10 assignment") {
  SynthSpec spec;
  spec.n_participants = 20;
  std::map<int, std::map<manifest::Split, int>> per_class;
  int female = 0;
  for (int p = 0; p < 20; ++p) {
    const auto a = assign(spec, p);
    CHECK(a.cue_class == p % 2);
    CHECK(a.label_value == a.cue_class);
    ++per_class[a.cue_class][a.split];
    female += a.gender == manifest::Gender::Female;
  }
  for (int c = 0; c < 2; ++c) {
    CHECK(per_class[c][manifest::Split::Train] == 8);
    CHECK(per_class[c][manifest::Split::Val] == 1);
    CHECK(per_class[c][manifest::Split::Test] == 1);
  }
  CHECK(female == 10);

  spec.scheme = ClassScheme::Bdi;
  spec.n_participants = 40;
  int task_a = 0;
  for (int p = 0; p < 40; ++p) {
    const auto a = assign(spec, p);
    CHECK(manifest::binarize_bdi(a.label_value) == a.cue_class);
    task_a += a.task == "taskA";
    CHECK((a.task == "taskA" || a.task == "taskB"));
  }
  CHECK(task_a == 20);

  spec.scheme = ClassScheme::Severity24;
  spec.n_participants = 48;
  for (int p = 0; p < 48; ++p) CHECK(assign(spec, p).split != manifest::Split::Test);
}

TEST_CASE("generation is deterministic and well formed") {
  SynthSpec spec;
  spec.n_participants = 4;
  spec.duration_s = 8;
  spec.seed = 11;
  const auto a = testing::scratch_dir("synth_a");
  const auto b = testing::scratch_dir("synth_b");
  const auto ma = generate(spec, a);
  const auto mb = generate(spec, b);
  CHECK(manifest::format_manifest(ma) == manifest::format_manifest(mb));
  for (const auto& r : ma.rows) {
    CHECK(binio::read_file(a / r.wav_path) == binio::read_file(b / r.wav_path));
    CHECK(binio::read_text(a / r.transcript_path) == binio::read_text(b / r.transcript_path));
    const auto sig = audio::read_wav(a / r.wav_path);
    CHECK(sig.sample_rate_hz == 16000);
    CHECK(sig.samples.size() == 8 * 16000);
    const auto turns = audio::parse_transcript(binio::read_text(a / r.transcript_path));
    REQUIRE(turns.size() >= 2);
    CHECK(turns[0].speaker == audio::Speaker::Interviewer);
    CHECK(turns[1].speaker == audio::Speaker::Participant);
    for (std::size_t i = 1; i < turns.size(); ++i) CHECK(turns[i].start_s >= turns[i - 1].stop_s);
  }
  CHECK(manifest::load_manifest(a / "manifest.csv").rows.size() == 4);

  spec.seed = 12;
  const auto c = testing::scratch_dir("synth_c");
  const auto mc = generate(spec, c);
  CHECK(binio::read_file(a / ma.rows[0].wav_path) != binio::read_file(c / mc.rows[0].wav_path));

  spec.n_participants = 1;
  CHECK_THROWS_AS(generate(spec, c), ArgumentError);
  spec.n_participants = 4;
  spec.scheme = ClassScheme::Emotion8;
  CHECK_THROWS_AS(generate(spec, c), ArgumentError);
  spec.scheme = ClassScheme::Binary2;
  spec.duration_s = 2;
  CHECK_THROWS_AS(generate(spec, c), ArgumentError);
}

TEST_CASE("class cues separate in cepstral space") {
  SynthSpec spec;
  spec.n_participants = 12;
  spec.duration_s = 10;
  spec.seed = 5;
  const auto dir = testing::scratch_dir("synth_sep");
  const auto m = generate(spec, dir);
  const auto parts = dataset::extract_manifest(m, config::RunConfig{}).participants;
  REQUIRE(parts.size() == 12);
  std::map<int, std::vector<Eigen::VectorXd>> means;
  for (const auto& p : parts)
    means[p.label].push_back(p.features.values.middleCols(1, 5).colwise().mean().transpose());
  std::map<int, Eigen::VectorXd> centroid;
  double within = 0;
  int n = 0;
  for (auto& [c, v] : means) {
    centroid[c] = Eigen::VectorXd::Zero(5);
    for (const auto& x : v) centroid[c] += x;
    centroid[c] /= static_cast<double>(v.size());
    for (const auto& x : v) {
      within += (x - centroid[c]).squaredNorm();
      ++n;
    }
  }
  const double within_std = std::sqrt(within / n);
  CHECK((centroid[0] - centroid[1]).norm() > 3 * within_std);
}
