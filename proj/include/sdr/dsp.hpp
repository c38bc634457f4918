#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sdr/audio_io.hpp"

namespace sdr::dsp {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FrameSpec {
  double clip_len_s = 2.5;
  double clip_hop_s = 0.5;
  double frame_len_s = 0.060;
  double frame_hop_s = 0.030;
  int n_mel = 24;
  int n_static_ceps = 20;
  int fft_size = 0;  // 0: next power of two >= frame samples
  int delta_window = 2;
  double log_floor = 1e-10;

  /// Throws ArgumentError on a broken invariant.
  void validate() const;
  int frame_samples(int rate) const;
  int hop_samples(int rate) const;
  int clip_samples(int rate) const;
  int clip_hop_samples(int rate) const;
  int fft_size_for(int rate) const;
  int frames_per_clip(int rate) const;
  int feature_dim() const { return 3 * n_static_ceps; }
};

void to_json(nlohmann::json& j, const FrameSpec& s);
void from_json(const nlohmann::json& j, FrameSpec& s);

struct FrameOrigin {
  int segment = 0;
  int clip = 0;
  int frame = 0;
};

/// One analysis frame (frame_len samples, not yet windowed).
struct Frame {
  std::vector<double> samples;
  FrameOrigin origin;
};

/// n frames x 60 coefficients ([static | delta | delta-delta]).
struct FeatureMatrix {
  RowMatrixXd values;
  std::vector<FrameOrigin> origins;
  std::string source_id;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

inline constexpr double kStdFloor = 1e-8;

Eigen::VectorXd hamming_window(int n);

/// Two-level framing: each segment is chunked into clips, each clip into
/// analysis frames. Output is in (segment, clip, frame) order.
std::vector<Frame> frame_segments(const audio::SegmentSet& segments, const FrameSpec& spec);

/// Number of clips frame_segments cuts from a segment of `n` samples.
int clip_count(std::size_t n, const FrameSpec& spec, int rate);

/// |DFT| of the Hamming-windowed, zero-padded frame; fft_size/2+1 bins.
Eigen::VectorXd power_spectrum(std::span<const double> frame, const FrameSpec& spec, int rate);

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// n_mel x (fft_size/2+1) triangular filters, peak 1, centers equally
/// spaced in mel between 0 Hz and rate/2.
RowMatrixXd mel_filterbank(const FrameSpec& spec, int rate);

/// Orthonormal DCT-II matrix (n_out x n_in).
RowMatrixXd dct_matrix(int n_out, int n_in);

/// Static cepstra of one frame: DCT-II(log(max(fb * |X|, floor))), first
/// n_static_ceps coefficients (c0 included).
Eigen::VectorXd mfcc_frame(std::span<const double> frame, const RowMatrixXd& filterbank,
                           const FrameSpec& spec, int rate);

/// Regression deltas over rows with edge replication.
RowMatrixXd deltas(const RowMatrixXd& features, int window = 2);

FeatureMatrix extract_features(const audio::SegmentSet& segments, const FrameSpec& spec);

NormStats fit_norm_stats(const FeatureMatrix& features);
NormStats fit_norm_stats(std::span<const FeatureMatrix* const> parts);
FeatureMatrix apply_norm(const FeatureMatrix& features, const NormStats& stats);

/// Contiguous row blocks belonging to one clip, in order.
struct ClipRange {
  int segment = 0;
  int clip = 0;
  Eigen::Index first_row = 0;
  Eigen::Index rows = 0;
};
std::vector<ClipRange> clip_ranges(const FeatureMatrix& features);

nlohmann::json norm_to_json(const NormStats& stats);

// .fmx / .nrm persistence: JSON header line + LE float32 row-major payload.
std::vector<std::uint8_t> encode_fmx(const FeatureMatrix& features, const FrameSpec& spec);
FeatureMatrix decode_fmx(std::span<const std::uint8_t> bytes, FrameSpec* spec = nullptr);
void save_fmx(const std::filesystem::path& path, const FeatureMatrix& f, const FrameSpec& spec);
FeatureMatrix load_fmx(const std::filesystem::path& path, FrameSpec* spec = nullptr);

std::vector<std::uint8_t> encode_nrm(const NormStats& stats);
NormStats decode_nrm(std::span<const std::uint8_t> bytes);
void save_nrm(const std::filesystem::path& path, const NormStats& stats);
NormStats load_nrm(const std::filesystem::path& path);

}  // namespace sdr::dsp
