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

#include <cmath>
#include <set>

#include "pxfer/corpus/synthetic.hpp"
#include "pxfer/eval/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/tempdir.hpp"

namespace cp = pxfer::corpus;
namespace ev = pxfer::eval;
namespace tr = pxfer::train;
using pxfer::nn::Array;
using pxfer::testing::TempDir;

namespace {

// Rows are base + contour[t] in every bin, so log energy is contour[t] + const.
Array<float> mel_with_contour(const std::vector<double>& contour, std::size_t M, double base) {
  Array<float> a({contour.size(), M});
  for (std::size_t t = 0; t < contour.size(); ++t)
    for (std::size_t m = 0; m < M; ++m) a.at(t, m) = float(base + contour[t] + 0.1 * double(m % 3));
  return a;
}

double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
    sab += a[i] * b[i];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

struct TinyWorld {
  TempDir dir{"eval_corpus"};
  std::optional<cp::Corpus> corpus;
  std::optional<tr::GeneratorBundle> bundle;
  std::vector<tr::Example> test;

  TinyWorld() {
    cp::SyntheticSpec s;
    s.num_speakers = 3;
    s.num_phonemes = 6;
    s.utterances_per_speaker = 6;
    s.n_mels = 5;
    s.min_phonemes = 3;
    s.max_phonemes = 4;
    s.min_duration = 2;
    s.max_duration = 3;
    s.unseen_speakers = 1;
    cp::generate_synthetic_corpus(s, dir.path());
    corpus.emplace(dir.path());
    tr::TrainConfig c;
    c.steps = 3;
    c.batch_size = 2;
    auto cls = tr::train_classifier(*corpus, pxfer::testing::tiny_classifier_config(), c, 1).bundle;
    auto mc = pxfer::testing::tiny_model_config();
    mc.n_mels = mc.num_phonemes = mc.speaker_dim = 0;
    bundle.emplace(std::move(*tr::train_initial(*corpus, cls, mc, c, 1).bundle));
    test = ev::embedded_examples(*corpus, cp::Split::kTest, bundle->classifier);
  }
};

TinyWorld& world() {
  static TinyWorld w;
  return w;
}

}  // namespace

TEST(EnergyContour, MatchesDirectSum) {
  Array<float> a({2, 3}, {0.0f, 1.0f, -1.0f, -3.0f, -3.0f, -3.0f});
  const auto e = ev::energy_contour(a);
  EXPECT_NEAR(e[0], std::log(1.0 + std::exp(1.0) + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(e[1], std::log(3.0) - 3.0, 1e-12);
  // No overflow for large log magnitudes.
  Array<float> big({1, 2}, {800.0f, 800.0f});
  EXPECT_NEAR(ev::energy_contour(big)[0], 800.0 + std::log(2.0), 1e-9);
}

TEST(ProsodyCorrelation, IdentityAndNegation) {
  std::vector<double> c{0.3, -1.0, 2.0, 0.5, 0.0, 1.1, -0.4};
  std::vector<double> neg;
  for (double v : c) neg.push_back(-v);
  const auto a = mel_with_contour(c, 4, -2.0);
  const auto r1 = ev::prosody_correlation(a, a, -100.0);
  ASSERT_TRUE(r1.r);
  EXPECT_NEAR(*r1.r, 1.0, 1e-12);
  EXPECT_EQ(r1.frames, c.size());
  const auto r2 = ev::prosody_correlation(a, mel_with_contour(neg, 4, 1.0), -100.0);
  ASSERT_TRUE(r2.r);
  EXPECT_NEAR(*r2.r, -1.0, 1e-9);
}

TEST(ProsodyCorrelation, SilenceFloorAndErrors) {
  std::vector<double> c{0, 1, 2, 3, -50, -50};
  const auto a = mel_with_contour(c, 3, 0.0);
  EXPECT_EQ(ev::prosody_correlation(a, a, -10.0).frames, 4u);
  EXPECT_FALSE(ev::prosody_correlation(a, a, 100.0).r);
  const auto flat = mel_with_contour({1, 1, 1}, 3, 0.0);
  EXPECT_FALSE(ev::prosody_correlation(flat, flat, -100.0).r);
  EXPECT_THROW(ev::prosody_correlation(a, flat, -100.0), pxfer::AlignmentError);
  pxfer::features::MelConfig mc;
  EXPECT_NEAR(ev::silence_floor(mc, 0.0), std::log(80 * 1e-5), 1e-12);
}

TEST(Pearson, PropertiesAgainstOracle) {
  pxfer::nn::Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(30);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = 0.5 * a[i] + rng.normal();
    }
    const auto r = ev::pearson(a, b);
    ASSERT_TRUE(r.r);
    EXPECT_NEAR(*r.r, pearson_oracle(a, b), 1e-9);
    EXPECT_LE(std::abs(*r.r), 1.0);
    const double s = rng.uniform(0.1, 5.0), o = rng.uniform(-3, 3);
    std::vector<double> b2;
    for (double v : b) b2.push_back(-s * v + o);
    EXPECT_NEAR(*ev::pearson(a, b2).r, -*r.r, 1e-9);
  }
}

TEST(Cycle, ZeroAtIdentityFixedPoint) {
  pxfer::nn::Rng rng(2);
  const auto x = pxfer::nn::normal_array<float>({6, 3}, 1.0, rng);
  const Array<float> e({2}, 0.0f);
  auto encode = [](const Array<float>& v, const Array<float>&) { return v; };
  auto decode = [](const Array<float>& z) { return z; };
  auto embed = [](const Array<float>&) { return Array<float>({2}, 1.0f); };
  const auto c = ev::cycle_entry(x, e, encode, decode, embed);
  EXPECT_EQ(c.mean_abs_diff, 0.0);
  EXPECT_GT(c.mean_abs_z, 0.0);
  EXPECT_THROW(ev::cycle_entry(x, e, encode, decode, embed, pxfer::models::EncodeMode::kSample),
               pxfer::InvalidInput);
  // A decoder that shifts its input is detected.
  auto shifted = [](const Array<float>& z) {
    Array<float> o = z;
    for (auto& v : o.data) v += 0.5f;
    return o;
  };
  EXPECT_NEAR(ev::cycle_entry(x, e, encode, shifted, embed).mean_abs_diff, 0.5, 1e-6);
}

TEST(Cycle, ModelReportIsNonNegativeAndDeterministic) {
  auto& w = world();
  const auto a = ev::cycle_report(*w.bundle, w.test);
  const auto b = ev::cycle_report(*w.bundle, w.test);
  std::size_t expected = 0;
  for (const auto& ex : w.test) expected += w.bundle->centroids.size() - w.bundle->centroids.count(ex.utt.speaker);
  EXPECT_EQ(a.entries.size(), expected);
  EXPECT_EQ(ev::to_json(a), ev::to_json(b));
  EXPECT_GE(a.relative, 0.0);
  for (const auto& e : a.entries) {
    EXPECT_GE(e.mean_abs_diff, 0.0);
    EXPECT_NE(e.source, e.target);
  }
  EXPECT_THROW(w.bundle->centroid(99), pxfer::InvalidInput);
}

TEST(StratifiedSplit, DisjointCoveringAndPerClass) {
  std::vector<int> y;
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 10 + k; ++i) y.push_back(k);
  const auto [tr_idx, te_idx] = ev::stratified_split(y, 0.3, 7);
  std::set<std::size_t> all(tr_idx.begin(), tr_idx.end());
  for (auto i : te_idx) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), y.size());
  std::map<int, int> per;
  for (auto i : te_idx) ++per[y[i]];
  EXPECT_EQ(per[0], 3);
  EXPECT_EQ(per[1], 3);
  EXPECT_EQ(per[2], 4);
  EXPECT_EQ(ev::stratified_split(y, 0.3, 7), ev::stratified_split(y, 0.3, 7));
}

TEST(LinearProbe, SeparableSignalAndShuffledControl) {
  pxfer::nn::Rng rng(5);
  std::vector<std::vector<double>> X;
  std::vector<int> y;
  for (int n = 0; n < 150; ++n) {
    const int k = n % 3;
    std::vector<double> x(6);
    for (auto& v : x) v = rng.normal();
    x[std::size_t(k)] += 4.0;
    X.push_back(x);
    y.push_back(k);
  }
  const auto [a, b] = ev::stratified_split(y, 0.3, 1);
  EXPECT_GE(ev::probe_accuracy(X, y, 3, a, b, {}), 0.95);
  // Labels independent of the features: near chance.
  std::vector<int> noise;
  for (std::size_t n = 0; n < y.size(); ++n) noise.push_back(int(rng.index(3)));
  const auto [c, d] = ev::stratified_split(noise, 0.3, 1);
  EXPECT_NEAR(ev::probe_accuracy(X, noise, 3, c, d, {}), 1.0 / 3.0, 0.15);
}

TEST(Leakage, ReportShapeAndDeterminism) {
  auto& w = world();
  const auto r = ev::leakage_probe(*w.bundle, w.test, 3);
  EXPECT_EQ(ev::to_json(r), ev::to_json(ev::leakage_probe(*w.bundle, w.test, 3)));
  EXPECT_EQ(r.speakers, 4u);
  EXPECT_DOUBLE_EQ(r.chance, 0.25);
  for (double v : {r.latent_accuracy, r.raw_accuracy, r.shuffled_accuracy}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  std::vector<tr::Example> one;
  for (const auto& ex : w.test)
    if (ex.utt.speaker == w.test[0].utt.speaker) one.push_back(ex);
  EXPECT_THROW(ev::leakage_probe(*w.bundle, one, 3), pxfer::InvalidInput);
}

TEST(Transfer, EntriesCoverTargetsAndKeepLength) {
  auto& w = world();
  const auto floor = ev::silence_floor(w.corpus->manifest().mel);
  const auto r = ev::transfer_report(*w.bundle, w.test, floor);
  std::size_t expected = 0;
  for (const auto& ex : w.test) expected += w.bundle->centroids.size() - w.bundle->centroids.count(ex.utt.speaker);
  EXPECT_EQ(r.entries.size(), expected);
  EXPECT_GE(r.speaker_accuracy, 0.0);
  EXPECT_LE(r.speaker_accuracy, 1.0);
  const auto& ex = w.test[0];
  EXPECT_EQ(w.bundle->transfer(ex.x, ex.utt.phonemes, w.bundle->centroids.begin()->first).rows(), ex.x.rows());
  const auto j = ev::to_json(r);
  EXPECT_TRUE(j.contains("entries"));
  EXPECT_FALSE(ev::to_json(r, false).contains("entries"));
}
