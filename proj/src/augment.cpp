#include "sdr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "sdr/errors.hpp"

namespace sdr::augment {

void AugmentConfig::validate() const {
  if (!(noise_factor > 0 && pitch_factor > 0 && speed_factor > 0))
    throw ArgumentError("augmentation factors must be positive");
  if (shift_max_s < 0) throw ArgumentError("shift_max_s must be non-negative");
}

std::string_view technique_name(Technique t) {
  switch (t) {
    case Technique::Original: return "orig";
    case Technique::Noise: return "noise";
    case Technique::Pitch: return "pitch";
    case Technique::Shift: return "shift";
    case Technique::Speed: return "speed";
  }
  return "?";
}

audio::AudioSignal inject_noise(const audio::AudioSignal& signal, double factor, Rng& rng) {
  if (factor < 0) throw ArgumentError("noise factor must be non-negative");
  audio::AudioSignal out = signal;
  if (factor == 0) return out;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& s : out.samples) s = std::clamp(s + factor * gauss(rng), -1.0, 1.0);
  return out;
}

audio::AudioSignal shift_samples(const audio::AudioSignal& signal, long long k) {
  audio::AudioSignal out;
  out.sample_rate_hz = signal.sample_rate_hz;
  const auto n = static_cast<long long>(signal.samples.size());
  out.samples.assign(signal.samples.size(), 0.0);
  if (std::llabs(k) >= n) return out;
  if (k >= 0) {
    std::copy(signal.samples.begin(), signal.samples.end() - k, out.samples.begin() + k);
  } else {
    std::copy(signal.samples.begin() - k, signal.samples.end(), out.samples.begin());
  }
  return out;
}

audio::AudioSignal shift_time(const audio::AudioSignal& signal, double shift_max_s, Rng& rng) {
  if (shift_max_s < 0) throw ArgumentError("shift_max_s must be non-negative");
  if (shift_max_s * signal.sample_rate_hz >= static_cast<double>(signal.samples.size()))
    throw ArgumentError("shift_max_s is not shorter than the signal");
  if (shift_max_s == 0) return signal;
  std::uniform_real_distribution<double> draw(-shift_max_s, shift_max_s);
  const double s = draw(rng);
  const long long k = std::llround(std::abs(s) * signal.sample_rate_hz);
  return shift_samples(signal, s < 0 ? -k : k);
}

audio::AudioSignal stretch_speed(const audio::AudioSignal& signal, double speed_factor) {
  if (!(speed_factor > 0)) throw ArgumentError("speed factor must be positive");
  audio::AudioSignal out;
  out.sample_rate_hz = signal.sample_rate_hz;
  const std::size_t n = signal.samples.size();
  if (n == 0) return out;
  if (speed_factor == 1.0) return signal;
  const auto m = static_cast<std::size_t>(std::floor(static_cast<double>(n - 1) / speed_factor)) + 1;
  out.samples.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = static_cast<double>(i) * speed_factor;
    const auto lo = std::min(static_cast<std::size_t>(pos), n - 1);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = (1.0 - frac) * signal.samples[lo] + frac * signal.samples[hi];
  }
  return out;
}

audio::AudioSignal ola_stretch(const audio::AudioSignal& signal, std::size_t out_len, double grain_s) {
  audio::AudioSignal out;
  out.sample_rate_hz = signal.sample_rate_hz;
  out.samples.assign(out_len, 0.0);
  const auto in_len = static_cast<long long>(signal.samples.size());
  if (out_len == 0 || in_len == 0) return out;

  const long long grain = std::max(2LL, 2 * std::llround(grain_s * signal.sample_rate_hz / 2.0));
  const long long hop = grain / 2;
  std::vector<double> window(static_cast<std::size_t>(grain));
  for (long long k = 0; k < grain; ++k)  // periodic Hann: shifted copies at hop sum to 1
    window[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / grain);

  const double ratio = static_cast<double>(in_len) / static_cast<double>(out_len);
  const long long tolerance = grain / 8;
  auto at = [&](long long s) { return (s >= 0 && s < in_len) ? signal.samples[s] : 0.0; };
  std::vector<double> weight(out_len, 0.0);
  const auto n_out = static_cast<long long>(out_len);
  long long prev = std::numeric_limits<long long>::min();
  for (long long start = -hop; start < n_out; start += hop) {
    const long long nominal = std::llround(static_cast<double>(start) * ratio);
    long long src = nominal;
    if (prev != std::numeric_limits<long long>::min()) {
      // Pick the offset whose head best continues the previous grain.
      const long long follow = prev + hop;
      double best = -std::numeric_limits<double>::infinity();
      for (long long d = -tolerance; d <= tolerance; ++d) {
        double dot = 0, e = 1e-12;
        for (long long k = 0; k < hop; ++k) {
          const double c = at(nominal + d + k);
          dot += c * at(follow + k);
          e += c * c;
        }
        const double score = dot / std::sqrt(e);
        if (score > best + 1e-12 || (std::abs(score - best) <= 1e-12 && std::abs(d) < std::abs(src - nominal))) {
          best = score;
          src = nominal + d;
        }
      }
    }
    prev = src;
    for (long long k = 0; k < grain; ++k) {
      const long long t = start + k;
      if (t < 0 || t >= n_out) continue;
      out.samples[t] += window[k] * at(src + k);
      weight[t] += window[k];
    }
  }
  for (std::size_t t = 0; t < out_len; ++t)
    out.samples[t] = weight[t] > 1e-8 ? std::clamp(out.samples[t] / weight[t], -1.0, 1.0) : 0.0;
  return out;
}

audio::AudioSignal shift_pitch(const audio::AudioSignal& signal, double pitch_factor) {
  if (!(pitch_factor > 0)) throw ArgumentError("pitch factor must be positive");
  return ola_stretch(stretch_speed(signal, pitch_factor), signal.samples.size());
}

AugmentedSegments augment_dataset(const audio::SegmentSet& segments, const AugmentConfig& cfg) {
  cfg.validate();
  AugmentedSegments out;
  out.set.source_id = segments.source_id;
  const std::size_t n = segments.segments.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.set.segments.push_back(segments.segments[i]);
    out.technique.push_back(Technique::Original);
    out.source.push_back(i);
  }
  for (Technique t : kTechniques) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& seg = segments.segments[i];
      // One generator per (segment, technique), so blocks do not depend on each other.
      Rng rng(mix64(cfg.rng_seed ^ i) + static_cast<std::uint64_t>(t));
      audio::AudioSignal aug;
      switch (t) {
        case Technique::Noise: aug = inject_noise(seg, cfg.noise_factor, rng); break;
        case Technique::Pitch: aug = shift_pitch(seg, cfg.pitch_factor); break;
        case Technique::Shift: {
          // Short segments cannot honour the full shift range; cap it below their length.
          const double max_s = std::min(cfg.shift_max_s,
                                        0.5 * seg.duration_seconds());
          aug = shift_time(seg, max_s, rng);
          break;
        }
        case Technique::Speed: aug = stretch_speed(seg, cfg.speed_factor); break;
        case Technique::Original: break;
      }
      out.set.segments.push_back(std::move(aug));
      out.technique.push_back(t);
      out.source.push_back(i);
    }
  }
  return out;
}

dsp::FeatureMatrix corrupt_gaussian(const dsp::FeatureMatrix& features, double fraction, double sigma,
                                    Rng& rng) {
  if (!(fraction >= 0 && fraction <= 1)) throw ArgumentError("fraction must be in [0, 1]");
  dsp::FeatureMatrix out = features;
  const Eigen::Index rows = features.rows();
  const auto count = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(rows)));
  if (count == 0) return out;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  // Partial Fisher-Yates: the first `count` entries are a uniform sample.
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, rows - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::normal_distribution<double> gauss(0.0, sigma);
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index c = 0; c < features.cols(); ++c) out.values(order[i], c) += gauss(rng);
  return out;
}

}  // namespace sdr::augment
