// Copyright 2026 The pxfer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fftw3.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pxfer/errors.hpp"
#include "pxfer/io.hpp"
#include "pxfer/nn/array.hpp"

namespace pxfer::features {

struct MelConfig {
  int sample_rate = 16000;
  int n_fft = 1024;  // also the Hann window length
  int hop = 200;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-5;

  double top() const { return fmax > 0 ? fmax : sample_rate / 2.0; }
  int n_bins() const { return n_fft / 2 + 1; }
  void validate() const {
    if (sample_rate <= 0 || n_fft < 2 || hop <= 0 || n_mels <= 0 || log_floor <= 0 || fmin < 0 ||
        top() <= fmin || top() > sample_rate / 2.0)
      throw InvalidConfig("invalid mel configuration");
  }
};

// T x M log-mel frames (natural log, floor-clipped).
struct MelSpectrogram {
  nn::Array<float> frames;
  int sample_rate = 16000;
  int hop = 200;

  std::size_t num_frames() const { return frames.dims.empty() ? 0 : frames.dims[0]; }
  std::size_t num_bins() const { return frames.dims.size() < 2 ? 0 : frames.dims[1]; }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Band edges: n_mels + 2 frequencies equally spaced on the mel scale.
inline std::vector<double> mel_band_edges(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.top());
  std::vector<double> edges(std::size_t(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * double(i) / double(cfg.n_mels + 1));
  return edges;
}

inline std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
  auto e = mel_band_edges(cfg);
  return std::vector<double>(e.begin() + 1, e.end() - 1);
}

// Triangular filters with unit peak, [n_mels x (n_fft/2 + 1)].
inline Eigen::MatrixXd mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const auto e = mel_band_edges(cfg);
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, cfg.n_bins());
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double l = e[m], c = e[m + 1], r = e[m + 2];
    for (int k = 0; k < cfg.n_bins(); ++k) {
      const double f = double(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0;
      if (f > l && f <= c) w = (f - l) / (c - l);
      else if (f > c && f < r) w = (r - f) / (r - c);
      fb(m, k) = w;
    }
  }
  return fb;
}

namespace detail {

inline std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

inline std::size_t frame_count(std::size_t num_samples, int hop) {
  return (num_samples + std::size_t(hop) - 1) / std::size_t(hop);
}

// Centered frames over a reflection-padded signal.
inline std::vector<double> reflect_pad(std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  std::vector<double> out(n + 2 * pad);
  for (std::size_t i = 0; i < out.size(); ++i) {
    long j = long(i) - long(pad);
    while (j < 0 || j >= long(n)) {
      if (j < 0) j = -j;
      if (j >= long(n)) j = 2 * (long(n) - 1) - j;
    }
    out[i] = x[std::size_t(j)];
  }
  return out;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(std::size_t(n));
    out_ = fftw_alloc_complex(std::size_t(n / 2 + 1));
    fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::vector<std::complex<double>> forward(const double* frame) {
    std::copy_n(frame, n_, in_);
    fftw_execute(fwd_);
    std::vector<std::complex<double>> spec(std::size_t(n_ / 2 + 1));
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = {out_[k][0], out_[k][1]};
    return spec;
  }

  // Unnormalized inverse; caller divides by n.
  std::vector<double> inverse(const std::vector<std::complex<double>>& spec) {
    for (std::size_t k = 0; k < spec.size(); ++k) {
      out_[k][0] = spec[k].real();
      out_[k][1] = spec[k].imag();
    }
    fftw_execute(inv_);
    return std::vector<double>(in_, in_ + n_);
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan fwd_, inv_;
};

// Complex STFT, T x (n_fft/2 + 1), T = ceil(N / hop).
inline std::vector<std::vector<std::complex<double>>> stft(std::span<const double> x, const MelConfig& cfg,
                                                           RealFft& fft, const std::vector<double>& window) {
  const std::size_t T = frame_count(x.size(), cfg.hop);
  const auto padded = reflect_pad(x, std::size_t(cfg.n_fft / 2));
  std::vector<std::vector<std::complex<double>>> out(T);
  std::vector<double> frame(std::size_t(cfg.n_fft));
  for (std::size_t t = 0; t < T; ++t) {
    for (int i = 0; i < cfg.n_fft; ++i) frame[i] = padded[t * cfg.hop + i] * window[i];
    out[t] = fft.forward(frame.data());
  }
  return out;
}

// Weighted overlap-add inverse of `stft`, producing T * hop samples.
inline std::vector<double> istft(const std::vector<std::vector<std::complex<double>>>& spec, const MelConfig& cfg,
                                 RealFft& fft, const std::vector<double>& window) {
  const std::size_t T = spec.size(), pad = std::size_t(cfg.n_fft / 2);
  const std::size_t len = T * std::size_t(cfg.hop);
  std::vector<double> acc(len + 2 * pad + std::size_t(cfg.n_fft), 0.0), norm(acc.size(), 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto frame = fft.inverse(spec[t]);
    for (int i = 0; i < cfg.n_fft; ++i) {
      acc[t * cfg.hop + i] += frame[i] / cfg.n_fft * window[i];
      norm[t * cfg.hop + i] += window[i] * window[i];
    }
  }
  std::vector<double> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    const double n = norm[i + pad];
    out[i] = n > 1e-8 ? acc[i + pad] / n : 0.0;
  }
  return out;
}

}  // namespace detail

// STFT magnitude -> triangular mel filterbank -> natural log with floor.
inline MelSpectrogram compute_mel(std::span<const double> samples, const MelConfig& cfg) {
  cfg.validate();
  if (samples.size() < std::size_t(cfg.n_fft))
    throw InvalidInput("signal of " + std::to_string(samples.size()) + " samples is shorter than one " +
                       std::to_string(cfg.n_fft) + "-sample window");
  detail::RealFft fft(cfg.n_fft);
  const auto window = detail::hann(cfg.n_fft);
  const auto spec = detail::stft(samples, cfg, fft, window);
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const std::size_t T = spec.size(), M = std::size_t(cfg.n_mels);
  MelSpectrogram mel{nn::Array<float>({T, M}), cfg.sample_rate, cfg.hop};
  Eigen::VectorXd mag(cfg.n_bins());
  for (std::size_t t = 0; t < T; ++t) {
    for (int k = 0; k < cfg.n_bins(); ++k) mag[k] = std::abs(spec[t][k]);
    const Eigen::VectorXd m = fb * mag;
    for (std::size_t j = 0; j < M; ++j) mel.frames[t * M + j] = float(std::log(std::max(m[Eigen::Index(j)], cfg.log_floor)));
  }
  return mel;
}

inline MelSpectrogram compute_mel(std::span<const float> samples, const MelConfig& cfg) {
  std::vector<double> d(samples.begin(), samples.end());
  return compute_mel(std::span<const double>(d), cfg);
}

// Listening aid: pseudo-inverts the filterbank to a linear magnitude
// spectrogram and recovers phase with Griffin-Lim. Zero iterations yields the
// zero-phase reconstruction. Output length is T * hop samples.
inline std::vector<double> mel_to_audio(const MelSpectrogram& mel, const MelConfig& cfg, int iterations) {
  cfg.validate();
  if (mel.num_bins() != std::size_t(cfg.n_mels)) throw InvalidInput("mel_to_audio: bin count mismatch");
  const std::size_t T = mel.num_frames(), M = mel.num_bins();
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const Eigen::MatrixXd pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  std::vector<std::vector<double>> target(T, std::vector<double>(std::size_t(cfg.n_bins())));
  Eigen::VectorXd m(M);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < M; ++j) {
      const double v = std::exp(double(mel.frames[t * M + j]));
      m[Eigen::Index(j)] = v <= cfg.log_floor * (1 + 1e-6) ? 0.0 : v;
    }
    const Eigen::VectorXd lin = pinv * m;
    for (int k = 0; k < cfg.n_bins(); ++k) target[t][k] = std::max(lin[k], 0.0);
  }
  detail::RealFft fft(cfg.n_fft);
  const auto window = detail::hann(cfg.n_fft);
  std::vector<std::vector<std::complex<double>>> spec(T, std::vector<std::complex<double>>(cfg.n_bins()));
  for (std::size_t t = 0; t < T; ++t)
    for (int k = 0; k < cfg.n_bins(); ++k) spec[t][k] = target[t][k];
  auto audio = detail::istft(spec, cfg, fft, window);
  for (int it = 0; it < iterations; ++it) {
    const auto est = detail::stft(std::span<const double>(audio), cfg, fft, window);
    for (std::size_t t = 0; t < T; ++t)
      for (int k = 0; k < cfg.n_bins(); ++k) {
        const double a = std::abs(est[t][k]);
        spec[t][k] = a > 1e-12 ? est[t][k] / a * target[t][k] : std::complex<double>(target[t][k], 0.0);
      }
    audio = detail::istft(spec, cfg, fft, window);
  }
  return audio;
}

// ---- CCMF mel file -------------------------------------------------------------

inline constexpr std::uint16_t kMelFileVersion = 1;

inline std::vector<std::uint8_t> encode_mel(const MelSpectrogram& mel) {
  io::ByteWriter w;
  w.bytes("CCMF");
  w.u16(kMelFileVersion);
  w.u32(std::uint32_t(mel.num_frames()));
  w.u32(std::uint32_t(mel.num_bins()));
  w.u32(std::uint32_t(mel.sample_rate));
  w.u32(std::uint32_t(mel.hop));
  for (float v : mel.frames.data) w.f32(v);
  return std::move(w.data());
}

inline MelSpectrogram decode_mel(const std::vector<std::uint8_t>& bytes, const std::string& what = "mel file") {
  io::ByteReader r(bytes.data(), bytes.size(), what);
  if (r.bytes(4) != "CCMF") throw FormatError(what + ": bad magic");
  if (const auto v = r.u16(); v != kMelFileVersion)
    throw FormatError(what + ": unsupported version " + std::to_string(v));
  const std::size_t T = r.u32(), M = r.u32();
  MelSpectrogram mel;
  mel.sample_rate = int(r.u32());
  mel.hop = int(r.u32());
  if (T == 0 || M == 0) throw FormatError(what + ": empty spectrogram");
  if (r.remaining() != T * M * 4) throw FormatError(what + ": payload size does not match header");
  mel.frames = nn::Array<float>({T, M});
  for (auto& v : mel.frames.data) v = r.f32();
  return mel;
}

inline void write_mel(const std::filesystem::path& path, const MelSpectrogram& mel) {
  io::write_file_atomic(path, encode_mel(mel));
}

inline MelSpectrogram read_mel(const std::filesystem::path& path) {
  return decode_mel(io::read_file(path), path.string());
}

}  // namespace pxfer::features
