#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdr::audio {

inline constexpr int kCanonicalRate = 16000;

/// Mono PCM buffer, amplitudes in [-1, 1].
struct AudioSignal {
  std::vector<double> samples;
  int sample_rate_hz = kCanonicalRate;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

enum class Speaker { Participant, Interviewer };

struct TranscriptTurn {
  double start_s = 0.0;
  double stop_s = 0.0;
  Speaker speaker = Speaker::Participant;
};

/// Participant-only speech cut from one recording.
struct SegmentSet {
  std::vector<AudioSignal> segments;
  std::string source_id;

  int sample_rate_hz() const {
    return segments.empty() ? kCanonicalRate : segments.front().sample_rate_hz;
  }
  std::size_t total_samples() const;
};

/// Reads RIFF/WAVE PCM16 or IEEE float32, mono or stereo (downmixed by mean).
AudioSignal decode_wav(std::span<const std::uint8_t> bytes);

/// Writes 16-bit PCM mono: round(x * 32768) clipped to [-32768, 32767], so
/// 1.0 -> 32767 and -1.0 -> -32768.
std::vector<std::uint8_t> encode_wav(const AudioSignal& signal);

AudioSignal read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioSignal& signal);

/// Tab-separated `start<TAB>stop<TAB>speaker<TAB>utterance` with one header
/// line. Returned turns are sorted by start time.
std::vector<TranscriptTurn> parse_transcript(std::string_view text);

/// Inverse of parse_transcript, used for synthetic and augmented corpora.
std::string format_transcript(std::span<const TranscriptTurn> turns);

inline constexpr double kMinSegmentSeconds = 0.100;

/// One segment per Participant turn; turns past the end are clamped and
/// segments shorter than `min_segment_s` are dropped.
SegmentSet extract_participant_segments(const AudioSignal& signal,
                                        std::span<const TranscriptTurn> turns,
                                        std::string source_id = {},
                                        double min_segment_s = kMinSegmentSeconds);

/// Concatenates segments into one recording and returns the matching
/// Participant-only transcript, so that extracting again yields the same
/// segments.
std::pair<AudioSignal, std::vector<TranscriptTurn>> join_segments(const SegmentSet& set);

}  // namespace sdr::audio
