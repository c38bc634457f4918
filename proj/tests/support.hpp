#pragma once

#include <cmath>
#include <algorithm>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sdr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void put16(std::vector<std::uint8_t>& b, unsigned v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}
inline void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

// Hand-assembled RIFF file; `data` holds raw little-endian sample bytes.
inline std::vector<std::uint8_t> riff(unsigned format, unsigned channels, unsigned rate, unsigned bits,
                                      const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> b{'R', 'I', 'F', 'F'};
  put32(b, static_cast<std::uint32_t>(4 + 8 + 16 + 8 + data.size()));
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<std::uint8_t>(c));
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * bits / 8);
  put16(b, channels * bits / 8);
  put16(b, bits);
  for (char c : std::string("data")) b.push_back(static_cast<std::uint8_t>(c));
  put32(b, static_cast<std::uint32_t>(data.size()));
  b.insert(b.end(), data.begin(), data.end());
  return b;
}

inline std::vector<std::uint8_t> pcm16_bytes(const std::vector<int>& samples) {
  std::vector<std::uint8_t> b;
  for (int s : samples) put16(b, static_cast<unsigned>(static_cast<std::uint16_t>(static_cast<std::int16_t>(s))));
  return b;
}

// Direct O(n^2) DFT magnitude of the Hamming-windowed, zero-padded frame.
inline std::vector<double> naive_magnitude(const std::vector<double>& frame, int nfft) {
  const double pi = std::numbers::pi;
  const int n = static_cast<int>(frame.size());
  std::vector<double> out(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) {
    std::complex<double> acc = 0;
    for (int t = 0; t < n; ++t) {
      const double w = 0.54 - 0.46 * std::cos(2 * pi * t / (n - 1));
      acc += w * frame[t] * std::polar(1.0, -2 * pi * k * t / nfft);
    }
    out[k] = std::abs(acc);
  }
  return out;
}

// Triangles built from bin frequencies directly.
inline std::vector<std::vector<double>> naive_filterbank(int n_mel, int nfft, int rate) {
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> edges(n_mel + 2);
  for (int i = 0; i < n_mel + 2; ++i) edges[i] = hz(mel(rate / 2.0) * i / (n_mel + 1));
  std::vector<std::vector<double>> fb(n_mel, std::vector<double>(nfft / 2 + 1, 0.0));
  for (int m = 0; m < n_mel; ++m) {
    for (int k = 0; k <= nfft / 2; ++k) {
      const double f = static_cast<double>(k) * rate / nfft;
      const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
      if (f > lo && f <= c) fb[m][k] = (f - lo) / (c - lo);
      else if (f > c && f < hi) fb[m][k] = (hi - f) / (hi - c);
    }
  }
  return fb;
}

// Textbook orthonormal DCT-II of x, first n_out coefficients.
inline std::vector<double> naive_dct(const std::vector<double>& x, int n_out) {
  const double pi = std::numbers::pi;
  const int n = static_cast<int>(x.size());
  std::vector<double> out(n_out);
  for (int k = 0; k < n_out; ++k) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += x[i] * std::cos(pi * k * (2 * i + 1) / (2.0 * n));
    out[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return out;
}

inline std::vector<double> naive_mfcc(const std::vector<double>& frame,
                                      const std::vector<std::vector<double>>& fb, int nfft, int n_ceps,
                                      double floor) {
  const auto mag = naive_magnitude(frame, nfft);
  std::vector<double> logmel(fb.size());
  for (std::size_t m = 0; m < fb.size(); ++m) {
    double e = 0;
    for (int k = 0; k <= nfft / 2; ++k) e += fb[m][k] * mag[k];
    logmel[m] = std::log(std::max(e, floor));
  }
  return naive_dct(logmel, n_ceps);
}

}  // namespace testing
