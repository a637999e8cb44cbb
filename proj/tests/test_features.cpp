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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "pxfer/features/mel.hpp"
#include "pxfer/features/phonemes.hpp"
#include "pxfer/features/wav.hpp"

namespace ft = pxfer::features;

namespace {

std::vector<double> tone(double hz, std::size_t n, double amp = 0.5, int sr = 16000) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * std::numbers::pi * hz * double(i) / sr);
  return x;
}

// Cosine phase with n - 1 a whole number of periods: reflection padding then
// continues the tone exactly at both ends.
std::vector<double> cosine_tone(double hz, std::size_t n, int sr = 16000) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 0.5 * std::cos(2 * std::numbers::pi * hz * double(i) / sr);
  return x;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(ComputeMel, FrameCountFollowsHop) {
  ft::MelConfig cfg;
  // Reference count: one frame per hop-spaced center inside the signal.
  auto count = [](std::size_t n, std::size_t hop) {
    std::size_t frames = 0;
    for (std::size_t c = 0; c < n; c += hop) ++frames;
    return frames;
  };
  for (std::size_t n : {16000u, 16001u, 1024u, 3999u}) {
    auto mel = ft::compute_mel(std::span<const double>(tone(440, n)), cfg);
    EXPECT_EQ(mel.num_frames(), count(n, 200)) << n;
    EXPECT_EQ(mel.num_bins(), 80u);
  }
  EXPECT_EQ(ft::compute_mel(std::span<const double>(tone(440, 16000)), cfg).num_frames(), 80u);
}

TEST(ComputeMel, SilenceSitsAtFloor) {
  ft::MelConfig cfg;
  std::vector<double> silence(4000, 0.0);
  auto mel = ft::compute_mel(std::span<const double>(silence), cfg);
  for (float v : mel.frames.data) EXPECT_FLOAT_EQ(v, float(std::log(1e-5)));
}

TEST(ComputeMel, ToneLandsInNearestBand) {
  ft::MelConfig cfg;
  auto mel = ft::compute_mel(std::span<const double>(cosine_tone(1000, 8001)), cfg);
  // Band centers from the HTK mel formula, computed independently here.
  const double lo = 0, hi = 2595 * std::log10(1 + 8000.0 / 700);
  std::size_t nearest = 0;
  double best = 1e9;
  for (int m = 0; m < 80; ++m) {
    const double c = 700 * (std::pow(10, (lo + (hi - lo) * (m + 1) / 81.0) / 2595) - 1);
    if (std::abs(c - 1000) < best) {
      best = std::abs(c - 1000);
      nearest = std::size_t(m);
    }
  }
  for (std::size_t t = 0; t < mel.num_frames(); ++t) {
    std::size_t arg = 0;
    for (std::size_t m = 1; m < 80; ++m)
      if (mel.frames.at(t, m) > mel.frames.at(t, arg)) arg = m;
    EXPECT_EQ(arg, nearest) << "frame " << t;
  }
}

TEST(ComputeMel, ScalingShiftsLogMel) {
  ft::MelConfig cfg;
  std::mt19937_64 g(1);
  std::normal_distribution<double> nd(0, 0.1);
  std::vector<double> x(6000);
  for (auto& v : x) v = nd(g);
  auto y = x;
  for (auto& v : y) v *= 2;
  auto a = ft::compute_mel(std::span<const double>(x), cfg);
  auto b = ft::compute_mel(std::span<const double>(y), cfg);
  const float floor = float(std::log(1e-5));
  for (std::size_t i = 0; i < a.frames.size(); ++i)
    if (a.frames[i] > floor + 1) EXPECT_NEAR(b.frames[i] - a.frames[i], std::log(2.0), 1e-4);
  auto again = ft::compute_mel(std::span<const double>(x), cfg);
  EXPECT_EQ(again.frames.data, a.frames.data);
}

TEST(ComputeMel, ShortSignalRejected) {
  ft::MelConfig cfg;
  std::vector<double> x(1000, 0.1);
  EXPECT_THROW(ft::compute_mel(std::span<const double>(x), cfg), pxfer::InvalidInput);
}

TEST(MelToAudio, SilenceStaysSilent) {
  ft::MelConfig cfg;
  ft::MelSpectrogram mel{pxfer::nn::Array<float>({20, 80}, float(std::log(1e-5))), 16000, 200};
  auto audio = ft::mel_to_audio(mel, cfg, 4);
  EXPECT_EQ(audio.size(), 20u * 200u);
  for (double v : audio) EXPECT_LT(std::abs(v), 1e-6);
}

TEST(MelToAudio, ZeroIterationsKeepsLength) {
  ft::MelConfig cfg;
  auto mel = ft::compute_mel(std::span<const double>(tone(500, 5000)), cfg);
  EXPECT_EQ(ft::mel_to_audio(mel, cfg, 0).size(), mel.num_frames() * 200);
}

TEST(MelToAudio, RoundTripCorrelatesPerBin) {
  ft::MelConfig cfg;
  std::vector<double> x(16000, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = double(i) / 16000;
    const double env = 0.5 + 0.4 * std::sin(2 * std::numbers::pi * 3 * t);
    x[i] = env * (0.3 * std::sin(2 * std::numbers::pi * 300 * t) + 0.2 * std::sin(2 * std::numbers::pi * 1200 * t) +
                  0.1 * std::sin(2 * std::numbers::pi * 3100 * t));
  }
  auto mel = ft::compute_mel(std::span<const double>(x), cfg);
  auto audio = ft::mel_to_audio(mel, cfg, 32);
  auto back = ft::compute_mel(std::span<const double>(audio), cfg);
  ASSERT_EQ(back.num_frames(), mel.num_frames());
  // Correlation of each bin's trajectory over time, averaged over bins that
  // carry energy (mean within 6 nats of the loudest bin); the rest is
  // window leakage near the floor.
  std::vector<double> bin_mean(80, 0.0);
  for (std::size_t m = 0; m < 80; ++m) {
    for (std::size_t t = 0; t < mel.num_frames(); ++t) bin_mean[m] += mel.frames.at(t, m);
    bin_mean[m] /= double(mel.num_frames());
  }
  const double loudest = *std::max_element(bin_mean.begin(), bin_mean.end());
  double total = 0;
  int used = 0;
  for (std::size_t m = 0; m < 80; ++m) {
    if (bin_mean[m] < loudest - 6) continue;
    std::vector<double> a, b;
    for (std::size_t t = 2; t + 2 < mel.num_frames(); ++t) {
      a.push_back(mel.frames.at(t, m));
      b.push_back(back.frames.at(t, m));
    }
    total += pearson(a, b);
    ++used;
  }
  ASSERT_GT(used, 5);
  EXPECT_GT(total / used, 0.9);
}

TEST(MelFile, RoundTripAndCorruption) {
  ft::MelSpectrogram mel{pxfer::nn::Array<float>({3, 2}, {1, 2, 3, 4, 5, -6.5f}), 22050, 256};
  auto bytes = ft::encode_mel(mel);
  EXPECT_EQ(bytes.size(), 4u + 2 + 16 + 24);
  auto back = ft::decode_mel(bytes);
  EXPECT_EQ(back.frames, mel.frames);
  EXPECT_EQ(back.sample_rate, 22050);
  EXPECT_EQ(back.hop, 256);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(ft::decode_mel(bad), pxfer::FormatError);
  auto trunc = bytes;
  trunc.pop_back();
  EXPECT_THROW(ft::decode_mel(trunc), pxfer::FormatError);
  auto path = std::filesystem::temp_directory_path() / "pxfer_test.mel";
  ft::write_mel(path, mel);
  EXPECT_EQ(ft::read_mel(path).frames, mel.frames);
  std::filesystem::remove(path);
}

TEST(Upsample, Examples) {
  EXPECT_EQ(ft::upsample_phonemes({{7, 8, 9}, {2, 1, 3}}).ids, (std::vector<int>{7, 7, 8, 9, 9, 9}));
  EXPECT_EQ(ft::upsample_phonemes({{4}, {1}}).ids, (std::vector<int>{4}));
  EXPECT_THROW(ft::upsample_phonemes({{1, 2}, {0, 3}}), pxfer::InvalidInput);
  EXPECT_THROW(ft::upsample_phonemes({{1, 2}, {2, 3}}, 6), pxfer::AlignmentError);
  EXPECT_NO_THROW(ft::upsample_phonemes({{1, 2}, {2, 3}}, 5));
}

TEST(Upsample, RunLengthRoundTripProperty) {
  std::mt19937_64 g(21);
  for (int trial = 0; trial < 500; ++trial) {
    ft::PhonemeSequence p;
    const int n = 1 + int(g() % 20);
    for (int i = 0; i < n; ++i) {
      int id;
      do id = int(g() % 6);
      while (!p.ids.empty() && id == p.ids.back());
      p.ids.push_back(id);
      p.durations.push_back(1 + int(g() % 10));
    }
    auto up = ft::upsample_phonemes(p);
    EXPECT_EQ(up.ids.size(), p.total_frames());
    EXPECT_EQ(ft::run_length_encode(up), p);
  }
}

TEST(DurationFile, ParseAndErrors) {
  auto p = ft::parse_durations("3 4\n1 2\r\n\n0 7\n");
  EXPECT_EQ(p.ids, (std::vector<int>{3, 1, 0}));
  EXPECT_EQ(p.durations, (std::vector<int>{4, 2, 7}));
  EXPECT_EQ(ft::parse_durations(ft::format_durations(p)), p);
  EXPECT_THROW(ft::parse_durations("3\n"), pxfer::FormatError);
  EXPECT_THROW(ft::parse_durations("3 4 5\n"), pxfer::FormatError);
  EXPECT_THROW(ft::parse_durations(""), pxfer::FormatError);
  EXPECT_EQ(ft::parse_phonemes(ft::format_phonemes({5, 0, 12})), (std::vector<int>{5, 0, 12}));
  EXPECT_THROW(ft::parse_phonemes("1 x 2"), pxfer::FormatError);
}

TEST(Wav, Pcm16RoundTripWithinQuantization) {
  const auto x = tone(440, 1600, 0.8);
  const auto w = ft::decode_wav(ft::encode_wav(x, 16000));
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(w.samples[i], x[i], 1.0 / 32767);
}

TEST(Wav, RejectsNonRiff) {
  std::vector<std::uint8_t> junk(64, 7);
  EXPECT_THROW(ft::decode_wav(junk), pxfer::FormatError);
}
