#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sdr::manifest {

enum class LabelKind { Phq8Binary, Phq8Score, Emotion8, Bdi2 };
enum class Gender { Female, Male, Unknown };
enum class Split { Train, Val, Test };

std::string to_string(LabelKind k);
std::string to_string(Gender g);
std::string to_string(Split s);
LabelKind label_kind_from(std::string_view s);
Gender gender_from(std::string_view s);
Split split_from(std::string_view s);

/// Inclusive label range for a kind (binary 0..1, score 0..23, emotion 0..7,
/// BDI-II 0..63).
std::pair<int, int> label_range(LabelKind k);

/// BDI-II score (0..63) to binary depression: below `threshold` is 0.
/// Throws LabelError outside 0..63.
int binarize_bdi(int score, int threshold = 14);

struct ManifestRow {
  std::string id;
  std::string wav_path;         // relative to the manifest directory unless absolute
  std::string transcript_path;  // empty: the whole recording is participant speech
  LabelKind label_kind = LabelKind::Phq8Binary;
  int label_value = 0;
  Gender gender = Gender::Unknown;
  Split split = Split::Train;
  std::string task;             // optional recording task (generalization corpora)
};

/// CSV with header `id,wav_path,transcript_path,label_kind,label_value,gender,split[,task]`.
struct DatasetManifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& p) const;
  /// Unique ids, labels within range. Throws ParseError / LabelError.
  void validate() const;
  std::vector<std::size_t> indices(Split split) const;
  DatasetManifest filtered(bool (*keep)(const ManifestRow&)) const;
  template <typename Pred>
  DatasetManifest where(Pred&& keep) const {
    DatasetManifest out;
    out.base_dir = base_dir;
    for (const auto& r : rows)
      if (keep(r)) out.rows.push_back(r);
    return out;
  }
};

DatasetManifest parse_manifest(std::string_view csv, std::filesystem::path base_dir = {});
std::string format_manifest(const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);

}  // namespace sdr::manifest
