#include "sdr/manifest.hpp"

#include <charconv>
#include <set>

#include "sdr/binio.hpp"
#include "sdr/errors.hpp"

namespace sdr::manifest {

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

const char* kColumns[] = {"id", "wav_path", "transcript_path", "label_kind", "label_value", "gender", "split"};

}  // namespace

std::string to_string(LabelKind k) {
  switch (k) {
    case LabelKind::Phq8Binary: return "phq8_binary";
    case LabelKind::Phq8Score: return "phq8_score";
    case LabelKind::Emotion8: return "emotion8";
    case LabelKind::Bdi2: return "bdi2";
  }
  return "?";
}

std::string to_string(Gender g) {
  switch (g) {
    case Gender::Female: return "F";
    case Gender::Male: return "M";
    case Gender::Unknown: return "unknown";
  }
  return "?";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

LabelKind label_kind_from(std::string_view s) {
  if (s == "phq8_binary") return LabelKind::Phq8Binary;
  if (s == "phq8_score") return LabelKind::Phq8Score;
  if (s == "emotion8") return LabelKind::Emotion8;
  if (s == "bdi2") return LabelKind::Bdi2;
  throw ParseError("unknown label_kind '" + std::string(s) + "'");
}

Gender gender_from(std::string_view s) {
  if (s == "F" || s == "f") return Gender::Female;
  if (s == "M" || s == "m") return Gender::Male;
  if (s == "unknown" || s.empty()) return Gender::Unknown;
  throw ParseError("unknown gender '" + std::string(s) + "'");
}

Split split_from(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split '" + std::string(s) + "'");
}

std::pair<int, int> label_range(LabelKind k) {
  switch (k) {
    case LabelKind::Phq8Binary: return {0, 1};
    case LabelKind::Phq8Score: return {0, 23};
    case LabelKind::Emotion8: return {0, 7};
    case LabelKind::Bdi2: return {0, 63};
  }
  return {0, 0};
}

int binarize_bdi(int score, int threshold) {
  if (score < 0 || score > 63) throw LabelError("BDI-II score " + std::to_string(score) + " outside 0..63");
  return score < threshold ? 0 : 1;
}

std::filesystem::path DatasetManifest::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& r : rows) {
    if (r.id.empty()) throw ParseError("empty participant id");
    if (!ids.insert(r.id).second) throw ParseError("duplicate id '" + r.id + "'");
    const auto [lo, hi] = label_range(r.label_kind);
    if (r.label_value < lo || r.label_value > hi)
      throw LabelError("row " + r.id + ": label " + std::to_string(r.label_value) + " outside " +
                       to_string(r.label_kind) + " range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].split == split) out.push_back(i);
  return out;
}

DatasetManifest DatasetManifest::filtered(bool (*keep)(const ManifestRow&)) const { return where(keep); }

DatasetManifest parse_manifest(std::string_view csv, std::filesystem::path base_dir) {
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  int task_col = -1;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string_view::npos) eol = csv.size();
    const std::string_view line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (header.empty()) {
      header = fields;
      for (std::size_t c = 0; c < std::size(kColumns); ++c)
        if (c >= header.size() || header[c] != kColumns[c])
          throw ParseError("manifest header must start with id,wav_path,transcript_path,label_kind,label_value,gender,split");
      for (std::size_t c = std::size(kColumns); c < header.size(); ++c)
        if (header[c] == "task") task_col = static_cast<int>(c);
      continue;
    }
    if (fields.size() != header.size())
      throw ParseError("manifest line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    ManifestRow r;
    r.id = fields[0];
    r.wav_path = fields[1];
    r.transcript_path = fields[2];
    r.label_kind = label_kind_from(fields[3]);
    const auto& lv = fields[4];
    const auto [ptr, ec] = std::from_chars(lv.data(), lv.data() + lv.size(), r.label_value);
    if (ec != std::errc() || ptr != lv.data() + lv.size())
      throw ParseError("manifest line " + std::to_string(line_no) + ": bad label_value '" + lv + "'");
    r.gender = gender_from(fields[5]);
    r.split = split_from(fields[6]);
    if (task_col >= 0) r.task = fields[static_cast<std::size_t>(task_col)];
    m.rows.push_back(std::move(r));
  }
  if (header.empty()) throw ParseError("empty manifest");
  m.validate();
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  bool has_task = false;
  for (const auto& r : m.rows) has_task |= !r.task.empty();
  std::string out = "id,wav_path,transcript_path,label_kind,label_value,gender,split";
  out += has_task ? ",task\n" : "\n";
  for (const auto& r : m.rows) {
    out += csv_field(r.id) + ',' + csv_field(r.wav_path) + ',' + csv_field(r.transcript_path) + ',' +
           to_string(r.label_kind) + ',' + std::to_string(r.label_value) + ',' + to_string(r.gender) + ',' +
           to_string(r.split);
    if (has_task) out += ',' + csv_field(r.task);
    out += '\n';
  }
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(binio::read_text(path), path.parent_path());
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  binio::write_text(path, format_manifest(m));
}

}  // namespace sdr::manifest
