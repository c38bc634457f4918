#include "sdr/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "sdr/binio.hpp"
#include "sdr/errors.hpp"

namespace sdr::dsp {

namespace {

int to_samples(double seconds, int rate) {
  return static_cast<int>(std::lround(seconds * rate));
}

/// Kahan-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

void FrameSpec::validate() const {
  if (!(clip_len_s > 0 && clip_hop_s > 0 && frame_len_s > 0 && frame_hop_s > 0))
    throw ArgumentError("frame spec durations must be positive");
  if (frame_len_s > clip_len_s) throw ArgumentError("frame_len_s exceeds clip_len_s");
  if (frame_hop_s > frame_len_s) throw ArgumentError("frame_hop_s exceeds frame_len_s");
  if (n_mel < 2) throw ArgumentError("n_mel must be at least 2");
  if (n_static_ceps < 1 || n_static_ceps > n_mel)
    throw ArgumentError("n_static_ceps must be in [1, n_mel]");
  if (fft_size != 0 && (fft_size & (fft_size - 1)) != 0)
    throw ArgumentError("fft_size must be a power of two");
  if (delta_window < 1) throw ArgumentError("delta_window must be >= 1");
  if (!(log_floor > 0)) throw ArgumentError("log_floor must be positive");
}

int FrameSpec::frame_samples(int rate) const { return to_samples(frame_len_s, rate); }
int FrameSpec::hop_samples(int rate) const { return std::max(1, to_samples(frame_hop_s, rate)); }
int FrameSpec::clip_samples(int rate) const { return to_samples(clip_len_s, rate); }
int FrameSpec::clip_hop_samples(int rate) const { return std::max(1, to_samples(clip_hop_s, rate)); }

int FrameSpec::fft_size_for(int rate) const {
  const int need = frame_samples(rate);
  if (fft_size != 0) {
    if (fft_size < need) throw ArgumentError("fft_size smaller than the analysis frame");
    return fft_size;
  }
  int n = 1;
  while (n < need) n <<= 1;
  return n;
}

int FrameSpec::frames_per_clip(int rate) const {
  return (clip_samples(rate) - frame_samples(rate)) / hop_samples(rate) + 1;
}

void to_json(nlohmann::json& j, const FrameSpec& s) {
  j = nlohmann::json{{"clip_len_s", s.clip_len_s},   {"clip_hop_s", s.clip_hop_s},
                     {"frame_len_s", s.frame_len_s}, {"frame_hop_s", s.frame_hop_s},
                     {"n_mel", s.n_mel},             {"n_static_ceps", s.n_static_ceps},
                     {"fft_size", s.fft_size},       {"delta_window", s.delta_window},
                     {"log_floor", s.log_floor}};
}

void from_json(const nlohmann::json& j, FrameSpec& s) {
  s.clip_len_s = j.at("clip_len_s").get<double>();
  s.clip_hop_s = j.at("clip_hop_s").get<double>();
  s.frame_len_s = j.at("frame_len_s").get<double>();
  s.frame_hop_s = j.at("frame_hop_s").get<double>();
  s.n_mel = j.at("n_mel").get<int>();
  s.n_static_ceps = j.at("n_static_ceps").get<int>();
  s.fft_size = j.at("fft_size").get<int>();
  s.delta_window = j.at("delta_window").get<int>();
  s.log_floor = j.at("log_floor").get<double>();
}

Eigen::VectorXd hamming_window(int n) {
  if (n < 2) throw ArgumentError("hamming window needs n >= 2");
  Eigen::VectorXd w(n);
  for (int k = 0; k < n; ++k)
    w[k] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * k / (n - 1));
  return w;
}

int clip_count(std::size_t n, const FrameSpec& spec, int rate) {
  const auto len = static_cast<std::size_t>(spec.clip_samples(rate));
  const auto hop = static_cast<std::size_t>(spec.clip_hop_samples(rate));
  int count = 0;
  for (std::size_t start = 0; start < n; start += hop) {
    if (start + len <= n) {
      ++count;
      if (start + len == n) break;
    } else {
      if (2 * (n - start) >= len) ++count;
      break;
    }
  }
  return count;
}

std::vector<Frame> frame_segments(const audio::SegmentSet& segments, const FrameSpec& spec) {
  spec.validate();
  std::vector<Frame> frames;
  for (std::size_t s = 0; s < segments.segments.size(); ++s) {
    const auto& seg = segments.segments[s];
    const int rate = seg.sample_rate_hz;
    const auto clip_len = static_cast<std::size_t>(spec.clip_samples(rate));
    const auto clip_hop = static_cast<std::size_t>(spec.clip_hop_samples(rate));
    const auto frame_len = static_cast<std::size_t>(spec.frame_samples(rate));
    const auto frame_hop = static_cast<std::size_t>(spec.hop_samples(rate));
    const int clips = clip_count(seg.samples.size(), spec, rate);
    std::vector<double> clip(clip_len);
    for (int c = 0; c < clips; ++c) {
      const std::size_t start = c * clip_hop;
      const std::size_t avail = std::min(clip_len, seg.samples.size() - start);
      std::fill(clip.begin(), clip.end(), 0.0);
      std::copy_n(seg.samples.begin() + static_cast<std::ptrdiff_t>(start), avail, clip.begin());
      int f = 0;
      for (std::size_t off = 0; off + frame_len <= clip_len; off += frame_hop, ++f) {
        Frame fr;
        fr.samples.assign(clip.begin() + static_cast<std::ptrdiff_t>(off),
                          clip.begin() + static_cast<std::ptrdiff_t>(off + frame_len));
        fr.origin = {static_cast<int>(s), c, f};
        frames.push_back(std::move(fr));
      }
    }
  }
  return frames;
}

Eigen::VectorXd power_spectrum(std::span<const double> frame, const FrameSpec& spec, int rate) {
  const int nfft = spec.fft_size_for(rate);
  const auto n = static_cast<int>(frame.size());
  if (n > nfft) throw ArgumentError("frame longer than fft_size");
  std::vector<double> buf(static_cast<std::size_t>(nfft), 0.0);
  if (n >= 2) {
    const Eigen::VectorXd w = hamming_window(n);
    for (int i = 0; i < n; ++i) buf[i] = frame[i] * w[i];
  } else if (n == 1) {
    buf[0] = frame[0];
  }
  static thread_local Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec_out;
  fft.fwd(spec_out, buf);
  Eigen::VectorXd mag(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) mag[k] = std::abs(spec_out[k]);
  return mag;
}

RowMatrixXd mel_filterbank(const FrameSpec& spec, int rate) {
  if (spec.n_mel < 2) throw ArgumentError("n_mel must be at least 2");
  const int nfft = spec.fft_size_for(rate);
  const int bins = nfft / 2 + 1;
  const double top = hz_to_mel(rate / 2.0);
  std::vector<double> edges(spec.n_mel + 2);
  for (int i = 0; i < spec.n_mel + 2; ++i) edges[i] = mel_to_hz(top * i / (spec.n_mel + 1));

  RowMatrixXd fb = RowMatrixXd::Zero(spec.n_mel, bins);
  for (int m = 0; m < spec.n_mel; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / nfft;
      if (f > lo && f <= mid) {
        fb(m, k) = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        fb(m, k) = (hi - f) / (hi - mid);
      }
    }
  }
  return fb;
}

RowMatrixXd dct_matrix(int n_out, int n_in) {
  RowMatrixXd d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n_in);
    for (int n = 0; n < n_in; ++n)
      d(k, n) = scale * std::cos(std::numbers::pi * k * (2 * n + 1) / (2.0 * n_in));
  }
  return d;
}

Eigen::VectorXd mfcc_frame(std::span<const double> frame, const RowMatrixXd& filterbank,
                           const FrameSpec& spec, int rate) {
  const Eigen::VectorXd mag = power_spectrum(frame, spec, rate);
  if (filterbank.cols() != mag.size()) throw ShapeError("filterbank width does not match spectrum");
  const Eigen::VectorXd log_mel =
      (filterbank * mag).array().max(spec.log_floor).log().matrix();
  static thread_local RowMatrixXd dct;
  if (dct.rows() != spec.n_static_ceps || dct.cols() != log_mel.size())
    dct = dct_matrix(spec.n_static_ceps, static_cast<int>(log_mel.size()));
  return dct * log_mel;
}

RowMatrixXd deltas(const RowMatrixXd& features, int window) {
  const Eigen::Index n = features.rows();
  if (n < 1) throw ArgumentError("deltas need at least one row");
  double denom = 0.0;
  for (int m = 1; m <= window; ++m) denom += m * m;
  denom *= 2.0;
  RowMatrixXd out = RowMatrixXd::Zero(n, features.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    for (int m = 1; m <= window; ++m) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + m, n - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - m, 0);
      out.row(t) += m * (features.row(ahead) - features.row(behind));
    }
  }
  return out / denom;
}

FeatureMatrix extract_features(const audio::SegmentSet& segments, const FrameSpec& spec) {
  const auto frames = frame_segments(segments, spec);
  if (frames.empty())
    throw EmptyFeaturesError("no analysis frames" +
                             (segments.source_id.empty() ? std::string() : " for " + segments.source_id));
  const int rate = segments.sample_rate_hz();
  const RowMatrixXd fb = mel_filterbank(spec, rate);
  const int nc = spec.n_static_ceps;

  FeatureMatrix out;
  out.source_id = segments.source_id;
  out.values.resize(static_cast<Eigen::Index>(frames.size()), spec.feature_dim());
  out.origins.reserve(frames.size());

  std::size_t begin = 0;
  while (begin < frames.size()) {
    std::size_t end = begin;
    while (end < frames.size() && frames[end].origin.segment == frames[begin].origin.segment &&
           frames[end].origin.clip == frames[begin].origin.clip)
      ++end;
    const auto len = static_cast<Eigen::Index>(end - begin);
    RowMatrixXd stat(len, nc);
    for (Eigen::Index i = 0; i < len; ++i)
      stat.row(i) = mfcc_frame(frames[begin + i].samples, fb, spec, rate).transpose();
    const RowMatrixXd d1 = deltas(stat, spec.delta_window);
    const RowMatrixXd d2 = deltas(d1, spec.delta_window);
    const auto row0 = static_cast<Eigen::Index>(begin);
    out.values.block(row0, 0, len, nc) = stat;
    out.values.block(row0, nc, len, nc) = d1;
    out.values.block(row0, 2 * nc, len, nc) = d2;
    for (std::size_t i = begin; i < end; ++i) out.origins.push_back(frames[i].origin);
    begin = end;
  }
  return out;
}

NormStats fit_norm_stats(std::span<const FeatureMatrix* const> parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  for (const auto* p : parts) {
    rows += p->rows();
    if (cols < 0) cols = p->cols();
    if (p->cols() != cols) throw ShapeError("feature matrices disagree on column count");
  }
  if (rows < 2) throw ArgumentError("norm stats need at least 2 rows");

  NormStats stats;
  stats.mean.resize(cols);
  stats.std.resize(cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    CompensatedSum sum;
    for (const auto* p : parts)
      for (Eigen::Index r = 0; r < p->rows(); ++r) sum.add(p->values(r, c));
    const double mean = sum.sum / static_cast<double>(rows);
    CompensatedSum sq;
    for (const auto* p : parts)
      for (Eigen::Index r = 0; r < p->rows(); ++r) {
        const double d = p->values(r, c) - mean;
        sq.add(d * d);
      }
    stats.mean[c] = mean;
    stats.std[c] = std::max(std::sqrt(sq.sum / static_cast<double>(rows)), kStdFloor);
  }
  return stats;
}

NormStats fit_norm_stats(const FeatureMatrix& features) {
  const FeatureMatrix* one[] = {&features};
  return fit_norm_stats(std::span<const FeatureMatrix* const>(one));
}

FeatureMatrix apply_norm(const FeatureMatrix& features, const NormStats& stats) {
  if (stats.mean.size() != features.cols() || stats.std.size() != features.cols())
    throw ShapeError("norm stats width does not match features");
  FeatureMatrix out = features;
  out.values = ((features.values.rowwise() - stats.mean.transpose()).array().rowwise() /
                stats.std.transpose().array())
                   .matrix();
  return out;
}

std::vector<ClipRange> clip_ranges(const FeatureMatrix& features) {
  std::vector<ClipRange> out;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const auto& o = features.origins[static_cast<std::size_t>(r)];
    if (out.empty() || out.back().segment != o.segment || out.back().clip != o.clip)
      out.push_back({o.segment, o.clip, r, 0});
    ++out.back().rows;
  }
  return out;
}

nlohmann::json norm_to_json(const NormStats& stats) {
  return {{"mean", std::vector<double>(stats.mean.begin(), stats.mean.end())},
          {"std", std::vector<double>(stats.std.begin(), stats.std.end())}};
}

std::vector<std::uint8_t> encode_fmx(const FeatureMatrix& features, const FrameSpec& spec) {
  std::vector<int> origins;
  origins.reserve(3 * features.origins.size());
  for (const auto& o : features.origins) {
    origins.push_back(o.segment);
    origins.push_back(o.clip);
    origins.push_back(o.frame);
  }
  const nlohmann::json header = {{"kind", "fmx"},
                                 {"rows", features.rows()},
                                 {"cols", features.cols()},
                                 {"source_id", features.source_id},
                                 {"frame_spec", spec},
                                 {"origins", origins}};
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f =
      features.values.cast<float>();
  return binio::encode_header_payload(header, {f.data(), static_cast<std::size_t>(f.size())});
}

FeatureMatrix decode_fmx(std::span<const std::uint8_t> bytes, FrameSpec* spec) {
  auto hp = binio::decode_header_payload(bytes);
  try {
    if (hp.header.at("kind") != "fmx") throw FormatError("not an .fmx header");
    FeatureMatrix out;
    const auto rows = hp.header.at("rows").get<Eigen::Index>();
    const auto cols = hp.header.at("cols").get<Eigen::Index>();
    if (static_cast<std::size_t>(rows * cols) != hp.payload.size())
      throw FormatError(".fmx shape does not match payload");
    out.source_id = hp.header.at("source_id").get<std::string>();
    const auto origins = hp.header.at("origins").get<std::vector<int>>();
    if (origins.size() != static_cast<std::size_t>(3 * rows)) throw FormatError(".fmx origins truncated");
    for (Eigen::Index r = 0; r < rows; ++r)
      out.origins.push_back({origins[3 * r], origins[3 * r + 1], origins[3 * r + 2]});
    out.values = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                     hp.payload.data(), rows, cols)
                     .cast<double>();
    if (spec) *spec = hp.header.at("frame_spec").get<FrameSpec>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad .fmx header: ") + e.what());
  }
}

void save_fmx(const std::filesystem::path& path, const FeatureMatrix& f, const FrameSpec& spec) {
  binio::write_file(path, encode_fmx(f, spec));
}

FeatureMatrix load_fmx(const std::filesystem::path& path, FrameSpec* spec) {
  return decode_fmx(binio::read_file(path), spec);
}

std::vector<std::uint8_t> encode_nrm(const NormStats& stats) {
  std::vector<float> payload;
  for (double m : stats.mean) payload.push_back(static_cast<float>(m));
  for (double s : stats.std) payload.push_back(static_cast<float>(s));
  return binio::encode_header_payload({{"kind", "nrm"}, {"dim", stats.mean.size()}}, payload);
}

NormStats decode_nrm(std::span<const std::uint8_t> bytes) {
  auto hp = binio::decode_header_payload(bytes);
  try {
    if (hp.header.at("kind") != "nrm") throw FormatError("not an .nrm header");
    const auto dim = hp.header.at("dim").get<Eigen::Index>();
    if (hp.payload.size() != static_cast<std::size_t>(2 * dim)) throw FormatError(".nrm size mismatch");
    NormStats s;
    s.mean = Eigen::Map<const Eigen::VectorXf>(hp.payload.data(), dim).cast<double>();
    s.std = Eigen::Map<const Eigen::VectorXf>(hp.payload.data() + dim, dim).cast<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad .nrm header: ") + e.what());
  }
}

void save_nrm(const std::filesystem::path& path, const NormStats& stats) {
  binio::write_file(path, encode_nrm(stats));
}

NormStats load_nrm(const std::filesystem::path& path) { return decode_nrm(binio::read_file(path)); }

}  // namespace sdr::dsp
