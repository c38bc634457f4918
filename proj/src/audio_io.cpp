#include "sdr/audio_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "sdr/binio.hpp"
#include "sdr/errors.hpp"

namespace sdr::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

bool tag_is(const std::uint8_t* p, const char* tag) { return std::memcmp(p, tag, 4) == 0; }

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::size_t SegmentSet::total_samples() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.samples.size();
  return n;
}

AudioSignal decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE"))
    throw FormatError("not a RIFF/WAVE stream");

  FmtChunk fmt;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = binio::load_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (tag_is(chunk, "fmt ")) {
      if (size < 16 || body + size > bytes.size()) throw FormatError("truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      fmt.format = binio::load_u16(f);
      fmt.channels = binio::load_u16(f + 2);
      fmt.rate = binio::load_u32(f + 4);
      fmt.block_align = binio::load_u16(f + 12);
      fmt.bits = binio::load_u16(f + 14);
      if (fmt.format == kFormatExtensible) {
        if (size < 26) throw FormatError("truncated extensible fmt chunk");
        fmt.format = binio::load_u16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (tag_is(chunk, "data")) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk");
      // Some writers leave the size of a streamed data chunk unset; take what exists.
      const std::size_t avail = bytes.size() - body;
      data = bytes.subspan(body, std::min<std::size_t>(size, avail));
      have_data = true;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (!have_data) throw FormatError("missing data chunk");
  if (fmt.rate == 0) throw FormatError("sample rate is zero");
  if (fmt.channels != 1 && fmt.channels != 2)
    throw UnsupportedError("unsupported channel count " + std::to_string(fmt.channels));

  const bool pcm16 = fmt.format == kFormatPcm && fmt.bits == 16;
  const bool f32 = fmt.format == kFormatFloat && fmt.bits == 32;
  if (!pcm16 && !f32)
    throw UnsupportedError("unsupported codec: format " + std::to_string(fmt.format) + ", " +
                           std::to_string(fmt.bits) + " bits");

  const std::size_t sample_bytes = fmt.bits / 8;
  const std::size_t frame_bytes = sample_bytes * fmt.channels;
  const std::size_t frames = data.size() / frame_bytes;

  AudioSignal out;
  out.sample_rate_hz = static_cast<int>(fmt.rate);
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < fmt.channels; ++ch) {
      const std::uint8_t* p = data.data() + i * frame_bytes + ch * sample_bytes;
      if (pcm16) {
        acc += static_cast<std::int16_t>(binio::load_u16(p)) / 32768.0;
      } else {
        acc += std::clamp(static_cast<double>(binio::load_f32(p)), -1.0, 1.0);
      }
    }
    out.samples[i] = acc / fmt.channels;
  }
  return out;
}

std::vector<std::uint8_t> encode_wav(const AudioSignal& signal) {
  const auto n = static_cast<std::uint32_t>(signal.samples.size());
  const std::uint32_t data_bytes = 2 * n;
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  auto tag = [&out](const char* t) { out.insert(out.end(), t, t + 4); };
  tag("RIFF");
  binio::append_u32(out, 36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  binio::append_u32(out, 16);
  binio::append_u16(out, kFormatPcm);
  binio::append_u16(out, 1);
  binio::append_u32(out, static_cast<std::uint32_t>(signal.sample_rate_hz));
  binio::append_u32(out, static_cast<std::uint32_t>(signal.sample_rate_hz) * 2);
  binio::append_u16(out, 2);
  binio::append_u16(out, 16);
  tag("data");
  binio::append_u32(out, data_bytes);
  for (double s : signal.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    binio::append_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

AudioSignal read_wav(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioSignal& signal) {
  binio::write_file(path, encode_wav(signal));
}

std::vector<TranscriptTurn> parse_transcript(std::string_view text) {
  std::vector<TranscriptTurn> turns;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line_no == 1) continue;  // header
    if (trim(line).empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t f = 0;
    while (fields.size() < 3) {
      const std::size_t tab = line.find('\t', f);
      fields.push_back(line.substr(f, tab == std::string_view::npos ? line.size() - f : tab - f));
      if (tab == std::string_view::npos) break;
      f = tab + 1;
    }
    if (fields.size() < 3)
      throw ParseError("line " + std::to_string(line_no) + ": expected at least 3 tab-separated fields");

    auto parse_time = [&](std::string_view field, const char* what) {
      field = trim(field);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v) || v < 0.0)
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                         std::string(field) + "'");
      return v;
    };
    TranscriptTurn turn;
    turn.start_s = parse_time(fields[0], "start time");
    turn.stop_s = parse_time(fields[1], "stop time");
    if (!(turn.start_s < turn.stop_s))
      throw ParseError("line " + std::to_string(line_no) + ": start time not before stop time");
    const std::string who = lowercase(trim(fields[2]));
    if (who == "participant") {
      turn.speaker = Speaker::Participant;
    } else if (who == "ellie" || who == "interviewer") {
      turn.speaker = Speaker::Interviewer;
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": unknown speaker '" +
                       std::string(fields[2]) + "'");
    }
    turns.push_back(turn);
  }
  std::stable_sort(turns.begin(), turns.end(), [](const TranscriptTurn& a, const TranscriptTurn& b) {
    return a.start_s < b.start_s || (a.start_s == b.start_s && a.stop_s < b.stop_s);
  });
  for (std::size_t i = 1; i < turns.size(); ++i) {
    if (turns[i].start_s < turns[i - 1].stop_s)
      throw ParseError("overlapping turns starting at " + std::to_string(turns[i - 1].start_s) +
                       " and " + std::to_string(turns[i].start_s));
  }
  return turns;
}

std::string format_transcript(std::span<const TranscriptTurn> turns) {
  std::string out = "start_time\tstop_time\tspeaker\tvalue\n";
  char buf[96];
  for (const auto& t : turns) {
    std::snprintf(buf, sizeof buf, "%.7f\t%.7f\t%s\t", t.start_s, t.stop_s,
                  t.speaker == Speaker::Participant ? "Participant" : "Ellie");
    out += buf;
    out += t.speaker == Speaker::Participant ? "<speech>\n" : "<question>\n";
  }
  return out;
}

SegmentSet extract_participant_segments(const AudioSignal& signal,
                                        std::span<const TranscriptTurn> turns,
                                        std::string source_id, double min_segment_s) {
  SegmentSet set;
  set.source_id = std::move(source_id);
  const double rate = signal.sample_rate_hz;
  const auto n = static_cast<long long>(signal.samples.size());
  const double min_len = min_segment_s * rate;
  for (const auto& turn : turns) {
    if (turn.speaker != Speaker::Participant) continue;
    const long long begin = std::clamp(std::llround(turn.start_s * rate), 0LL, n);
    const long long end = std::clamp(std::llround(turn.stop_s * rate), 0LL, n);
    if (end <= begin || static_cast<double>(end - begin) < min_len) continue;
    AudioSignal seg;
    seg.sample_rate_hz = signal.sample_rate_hz;
    seg.samples.assign(signal.samples.begin() + begin, signal.samples.begin() + end);
    set.segments.push_back(std::move(seg));
  }
  if (set.segments.empty())
    throw EmptySegmentsError("no participant speech" +
                             (set.source_id.empty() ? std::string() : " in " + set.source_id));
  return set;
}

std::pair<AudioSignal, std::vector<TranscriptTurn>> join_segments(const SegmentSet& set) {
  AudioSignal joined;
  joined.sample_rate_hz = set.sample_rate_hz();
  std::vector<TranscriptTurn> turns;
  const double rate = joined.sample_rate_hz;
  for (const auto& seg : set.segments) {
    const auto begin = joined.samples.size();
    joined.samples.insert(joined.samples.end(), seg.samples.begin(), seg.samples.end());
    turns.push_back({begin / rate, joined.samples.size() / rate, Speaker::Participant});
  }
  return {std::move(joined), std::move(turns)};
}

}  // namespace sdr::audio
