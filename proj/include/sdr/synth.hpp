#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sdr/manifest.hpp"

namespace sdr::synth {

enum class ClassScheme { Binary2, Severity24, Emotion8, Bdi };

std::string to_string(ClassScheme s);
ClassScheme scheme_from(const std::string& s);
int class_count(ClassScheme s);
manifest::LabelKind label_kind(ClassScheme s);

struct SynthSpec {
  int n_participants = 20;
  ClassScheme scheme = ClassScheme::Binary2;
  std::uint64_t seed = 0;
  double duration_s = 20.0;
  int sample_rate_hz = 16000;
};

/// Participant p belongs to cue class p % K. Within a class the last ~10% go
/// to test and the ~10% before them to val (at least one each from three
/// members up). Gender alternates within each class, starting on a
/// different gender for odd classes. BDI corpora carry a
/// random score on the side of 14 given by the cue class and alternate
/// taskA/taskB recordings.
struct Assignment {
  int cue_class = 0;
  int label_value = 0;
  manifest::Split split = manifest::Split::Train;
  manifest::Gender gender = manifest::Gender::Female;
  std::string task;
};
Assignment assign(const SynthSpec& spec, int participant);

/// Writes wav/<id>.wav, transcripts/<id>.tsv and manifest.csv under
/// `out_dir`. Throws ArgumentError if there are fewer participants than
/// classes (or fewer than 2).
manifest::DatasetManifest generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace sdr::synth
