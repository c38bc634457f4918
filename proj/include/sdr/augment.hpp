#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "sdr/audio_io.hpp"
#include "sdr/dsp.hpp"
#include "sdr/rng.hpp"

namespace sdr::augment {

struct AugmentConfig {
  double noise_factor = 0.05;
  double pitch_factor = 1.5;
  double shift_max_s = 0.2;
  double speed_factor = 1.5;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

enum class Technique { Original, Noise, Pitch, Shift, Speed };
inline constexpr Technique kTechniques[] = {Technique::Noise, Technique::Pitch, Technique::Shift,
                                            Technique::Speed};
std::string_view technique_name(Technique t);

/// x + factor * N(0, 1) per sample, clamped to [-1, 1].
audio::AudioSignal inject_noise(const audio::AudioSignal& signal, double factor, Rng& rng);

/// Shift by k samples, k = round(|s| * rate), s ~ U[-shift_max_s, shift_max_s].
/// Negative s shifts left (drop head, pad tail); positive shifts right.
audio::AudioSignal shift_time(const audio::AudioSignal& signal, double shift_max_s, Rng& rng);

/// Deterministic shift by `k` samples (negative = left).
audio::AudioSignal shift_samples(const audio::AudioSignal& signal, long long k);

/// Linear-interpolation resample at positions i * factor; length
/// floor((n - 1) / factor) + 1.
audio::AudioSignal stretch_speed(const audio::AudioSignal& signal, double speed_factor);

/// Speed change by `pitch_factor`, then an overlap-add time stretch back to
/// the input length (50 ms Hann grains, 50% overlap).
audio::AudioSignal shift_pitch(const audio::AudioSignal& signal, double pitch_factor);

/// Overlap-add time stretch of `signal` to exactly `out_len` samples. Each
/// grain's source position may move by up to grain/8 samples to best continue
/// the previous grain (normalized cross-correlation).
audio::AudioSignal ola_stretch(const audio::AudioSignal& signal, std::size_t out_len,
                               double grain_s = 0.050);

struct AugmentedSegments {
  audio::SegmentSet set;
  std::vector<Technique> technique;    // per segment
  std::vector<std::size_t> source;     // index of the source segment
};

/// Originals followed by one block per technique (noise, pitch, shift,
/// speed); 5x the input count. Per-segment randomness is seeded with
/// rng_seed ^ segment index.
AugmentedSegments augment_dataset(const audio::SegmentSet& segments, const AugmentConfig& cfg);

/// Adds N(0, sigma^2) to every cell of round(fraction * rows) uniformly
/// chosen rows.
dsp::FeatureMatrix corrupt_gaussian(const dsp::FeatureMatrix& features, double fraction,
                                    double sigma, Rng& rng);

}  // namespace sdr::augment
