#include "sdr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "sdr/audio_io.hpp"
#include "sdr/binio.hpp"
#include "sdr/dataset.hpp"
#include "sdr/errors.hpp"
#include "sdr/rng.hpp"

namespace sdr::synth {

using manifest::Gender;
using manifest::Split;

std::string to_string(ClassScheme s) {
  switch (s) {
    case ClassScheme::Binary2: return "binary2";
    case ClassScheme::Severity24: return "severity24";
    case ClassScheme::Emotion8: return "emotion8";
    case ClassScheme::Bdi: return "bdi";
  }
  return "binary2";
}

ClassScheme scheme_from(const std::string& s) {
  if (s == "binary2") return ClassScheme::Binary2;
  if (s == "severity24") return ClassScheme::Severity24;
  if (s == "emotion8") return ClassScheme::Emotion8;
  if (s == "bdi") return ClassScheme::Bdi;
  throw ArgumentError("unknown class scheme '" + s + "'");
}

int class_count(ClassScheme s) {
  switch (s) {
    case ClassScheme::Binary2:
    case ClassScheme::Bdi: return 2;
    case ClassScheme::Severity24: return 24;
    case ClassScheme::Emotion8: return 8;
  }
  return 2;
}

manifest::LabelKind label_kind(ClassScheme s) {
  switch (s) {
    case ClassScheme::Binary2: return manifest::LabelKind::Phq8Binary;
    case ClassScheme::Severity24: return manifest::LabelKind::Phq8Score;
    case ClassScheme::Emotion8: return manifest::LabelKind::Emotion8;
    case ClassScheme::Bdi: return manifest::LabelKind::Bdi2;
  }
  return manifest::LabelKind::Phq8Binary;
}

Assignment assign(const SynthSpec& spec, int p) {
  const int k = class_count(spec.scheme);
  Assignment a;
  a.cue_class = p % k;
  const int members = (spec.n_participants - a.cue_class + k - 1) / k;
  const int j = p / k;
  int n_val = 0, n_test = 0;
  if (members >= 3) {
    n_val = n_test = std::max(1, static_cast<int>(std::lround(0.1 * members)));
  } else if (members == 2) {
    n_val = 1;
  }
  if (j >= members - n_test) {
    a.split = Split::Test;
  } else if (j >= members - n_test - n_val) {
    a.split = Split::Val;
  }
  a.gender = (j + a.cue_class) % 2 == 0 ? Gender::Female : Gender::Male;
  a.label_value = a.cue_class;
  if (spec.scheme == ClassScheme::Bdi) {
    Rng rng = make_rng(spec.seed, "synth.bdi", static_cast<std::uint64_t>(p));
    std::uniform_int_distribution<int> score = a.cue_class == 1 ? std::uniform_int_distribution<int>(14, 45)
                                                                : std::uniform_int_distribution<int>(0, 13);
    a.label_value = score(rng);
    a.task = (j / 2) % 2 == 0 ? "taskA" : "taskB";
  }
  return a;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Voice {
  double f0 = 110.0;
  int harmonics = 2;
  double am_rate = 2.0;
};

Voice class_voice(int c, int k) {
  const double t = k > 1 ? static_cast<double>(c) / (k - 1) : 0.0;
  return {110.0 * std::pow(3.0, t), 2 + static_cast<int>(std::lround(6 * t)), 2.0 + 6.0 * t};
}

void render(std::vector<double>& out, std::size_t begin, std::size_t end, const Voice& v, int rate, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::vector<double> phases(v.harmonics);
  for (auto& ph : phases) ph = phase(rng);
  double norm = 0;
  for (int h = 1; h <= v.harmonics; ++h) norm += 1.0 / h;
  const double am_phase = phase(rng);
  for (std::size_t n = begin; n < end; ++n) {
    const double tau = static_cast<double>(n - begin) / rate;
    double s = 0;
    for (int h = 1; h <= v.harmonics; ++h) s += std::sin(kTwoPi * h * v.f0 * tau + phases[h - 1]) / h;
    const double env = 0.6 + 0.4 * std::sin(kTwoPi * v.am_rate * tau + am_phase);
    out[n] += 0.5 * env * s / norm;
  }
}

std::string participant_id(int p) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%03d", p);
  return buf;
}

}  // namespace

manifest::DatasetManifest generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  const int k = class_count(spec.scheme);
  if (spec.n_participants < 2 || spec.n_participants < k)
    throw ArgumentError("need at least " + std::to_string(std::max(2, k)) + " participants for " +
                        to_string(spec.scheme));
  if (spec.duration_s < 5.0) throw ArgumentError("duration_s must be at least 5 s");
  if (spec.sample_rate_hz < 8000) throw ArgumentError("sample rate too low");

  const double noise_std = spec.scheme == ClassScheme::Bdi ? 0.04 : 0.02;
  const Voice interviewer{196.0, 3, 1.0};

  manifest::DatasetManifest m;
  m.base_dir = out_dir;
  m.rows.resize(static_cast<std::size_t>(spec.n_participants));

  dataset::parallel_for(m.rows.size(), [&](std::size_t i) {
    const int p = static_cast<int>(i);
    const Assignment a = assign(spec, p);
    Rng rng = make_rng(spec.seed, "synth", i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int rate = spec.sample_rate_hz;
    const auto total = static_cast<std::size_t>(std::llround(spec.duration_s * rate));

    audio::AudioSignal sig;
    sig.sample_rate_hz = rate;
    sig.samples.assign(total, 0.0);
    std::vector<audio::TranscriptTurn> turns;
    const Voice base = class_voice(a.cue_class, k);
    double t = 0.2 * u(rng);
    bool participant = false;
    while (true) {
      double len = participant ? 3.5 + 1.0 * u(rng) : 1.0 + 1.0 * u(rng);
      const double room = spec.duration_s - 0.05 - t;
      if (participant && len > room && room >= 1.0) len = room;
      if (len > room) break;
      const auto b = static_cast<std::size_t>(std::llround(t * rate));
      const auto e = static_cast<std::size_t>(std::llround((t + len) * rate));
      if (participant) {
        Voice v = base;
        v.f0 *= 1.0 + 0.06 * (u(rng) - 0.5);
        render(sig.samples, b, e, v, rate, rng);
      } else {
        render(sig.samples, b, e, interviewer, rate, rng);
      }
      turns.push_back({t, t + len, participant ? audio::Speaker::Participant : audio::Speaker::Interviewer});
      t += len + 0.1 + 0.2 * u(rng);
      participant = !participant;
    }
    std::normal_distribution<double> noise(0.0, noise_std);
    for (auto& s : sig.samples) s = std::clamp(s + noise(rng), -1.0, 1.0);

    manifest::ManifestRow& row = m.rows[i];
    row.id = participant_id(p);
    row.wav_path = "wav/" + row.id + ".wav";
    row.transcript_path = "transcripts/" + row.id + ".tsv";
    row.label_kind = label_kind(spec.scheme);
    row.label_value = a.label_value;
    row.gender = a.gender;
    row.split = a.split;
    row.task = a.task;
    audio::write_wav(out_dir / row.wav_path, sig);
    binio::write_text(out_dir / row.transcript_path, audio::format_transcript(turns));
  });

  manifest::save_manifest(out_dir / "manifest.csv", m);
  return m;
}

}  // namespace sdr::synth
