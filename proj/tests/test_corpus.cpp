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
#include <filesystem>
#include <fstream>
#include <set>

#include "pxfer/corpus/batching.hpp"
#include "pxfer/corpus/synthetic.hpp"
#include "pxfer/nn.hpp"
#include "support/tempdir.hpp"

namespace cp = pxfer::corpus;
namespace fs = std::filesystem;
using pxfer::nn::Array;
using pxfer::testing::TempDir;

namespace {

cp::SyntheticSpec small_spec(std::uint64_t seed = 5) {
  cp::SyntheticSpec s;
  s.num_speakers = 3;
  s.num_phonemes = 6;
  s.utterances_per_speaker = 10;
  s.n_mels = 16;
  s.seed = seed;
  return s;
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) { return pxfer::io::read_file(p); }

// All regular files under a directory, relative path -> bytes.
std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = bytes_of(e.path());
  return out;
}

}  // namespace

TEST(Synthetic, SameSeedGivesBitIdenticalCorpora) {
  TempDir a("a"), b("b");
  cp::generate_synthetic_corpus(small_spec(), a.path());
  cp::generate_synthetic_corpus(small_spec(), b.path());
  const auto sa = snapshot(a.path()), sb = snapshot(b.path());
  EXPECT_EQ(sa.size(), 1u + 1u + 30u * 4u);
  EXPECT_TRUE(sa == sb);
  TempDir c("c");
  cp::generate_synthetic_corpus(small_spec(6), c.path());
  EXPECT_FALSE(snapshot(c.path()) == sa);
}

TEST(Synthetic, SpeakersDifferOnlyBySignature) {
  const auto spec = small_spec();
  const auto world = cp::SyntheticWorld::make(spec);
  pxfer::nn::Rng rng(3);
  const auto ph = cp::random_phonemes(spec, rng);
  const auto contour = cp::random_contour(ph.total_frames(), rng);
  const auto a = world.render(0, ph, contour, nullptr, 0);
  const auto b = world.render(2, ph, contour, nullptr, 0);
  for (std::size_t t = 0; t < a.rows(); ++t)
    for (std::size_t m = 0; m < a.cols(); ++m)
      EXPECT_NEAR(double(b.at(t, m)) - a.at(t, m), world.signatures[2][m] - world.signatures[0][m], 1e-5);
}

TEST(Synthetic, UtterancesRespectConstructionRanges) {
  const auto spec = small_spec();
  const auto world = cp::SyntheticWorld::make(spec);
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 10; ++i) {
      const auto u = cp::synthesize_utterance(world, spec, s, i);
      EXPECT_EQ(u.phonemes.total_frames(), u.frames());
      EXPECT_GE(u.phonemes.ids.size(), 5u);
      EXPECT_LE(u.phonemes.ids.size(), 20u);
      for (std::size_t k = 0; k < u.phonemes.ids.size(); ++k) {
        EXPECT_GE(u.phonemes.durations[k], 3);
        EXPECT_LE(u.phonemes.durations[k], 10);
        if (k) EXPECT_NE(u.phonemes.ids[k], u.phonemes.ids[k - 1]);
      }
      double mean = 0;
      for (float c : *u.prosody_truth) mean += c;
      EXPECT_NEAR(mean / double(u.frames()), 0.0, 1e-6);
    }
}

TEST(Synthetic, RejectsDegenerateSpecs) {
  TempDir d("d");
  auto s = small_spec();
  s.num_speakers = 1;
  EXPECT_THROW(cp::generate_synthetic_corpus(s, d.path()), pxfer::InvalidConfig);
  s = small_spec();
  s.num_phonemes = 2;
  EXPECT_THROW(cp::generate_synthetic_corpus(s, d.path()), pxfer::InvalidConfig);
}

TEST(Corpus, RoundTripPreservesAllFields) {
  TempDir d("rt");
  auto spec = small_spec();
  spec.unseen_speakers = 1;
  const auto written = cp::generate_synthetic_corpus(spec, d.path());
  const auto corpus = cp::load_corpus(d.path());
  const auto& m = corpus.manifest();
  EXPECT_EQ(m.speakers, written.speakers);
  EXPECT_EQ(m.train, written.train);
  EXPECT_EQ(m.val, written.val);
  EXPECT_EQ(m.test, written.test);
  EXPECT_EQ(m.norm, written.norm);
  EXPECT_EQ(m.num_phonemes, 6);
  EXPECT_EQ(m.mel.n_mels, 16);
  EXPECT_EQ(m.train_speakers(), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(m.train.size(), 21u);
  EXPECT_EQ(m.val.size(), 3u);
  EXPECT_EQ(m.test.size(), 16u);

  const auto world = cp::SyntheticWorld::make(spec);
  for (const auto& info : m.test) {
    if (info.id != "spk03_004" && info.id != "spk01_001") continue;
    const auto expect = cp::synthesize_utterance(world, spec, info.speaker, std::stoi(info.id.substr(6)));
    const auto got = corpus.load(info);
    EXPECT_EQ(got.mel.frames, expect.mel.frames);
    EXPECT_EQ(got.phonemes, expect.phonemes);
    EXPECT_EQ(*got.prosody_truth, *expect.prosody_truth);
    EXPECT_EQ(got.speaker, expect.speaker);
  }
}

TEST(Corpus, SplitsAreDisjoint) {
  TempDir d("sp");
  const auto m = cp::generate_synthetic_corpus(small_spec(), d.path());
  std::set<std::string> ids;
  for (auto s : {cp::Split::kTrain, cp::Split::kVal, cp::Split::kTest})
    for (const auto& u : m.split(s)) EXPECT_TRUE(ids.insert(u.id).second);
  EXPECT_EQ(ids.size(), 30u);
}

TEST(Corpus, NormalizedTrainingSetIsStandard) {
  TempDir d("norm");
  const auto corpus = [&] {
    cp::generate_synthetic_corpus(small_spec(), d.path());
    return cp::load_corpus(d.path());
  }();
  const std::size_t M = 16;
  std::vector<double> sum(M), sq(M);
  double n = 0;
  for (const auto& u : corpus.load_split(cp::Split::kTrain)) {
    const auto x = corpus.normalized(u);
    for (std::size_t t = 0; t < x.rows(); ++t)
      for (std::size_t m = 0; m < M; ++m) {
        sum[m] += x.at(t, m);
        sq[m] += double(x.at(t, m)) * x.at(t, m);
      }
    n += double(x.rows());
  }
  for (std::size_t m = 0; m < M; ++m) {
    const double mu = sum[m] / n;
    EXPECT_NEAR(mu, 0.0, 1e-3);
    EXPECT_NEAR(std::sqrt(sq[m] / n - mu * mu), 1.0, 1e-2);
  }
  const auto u = corpus.load(corpus.manifest().train[0]);
  const auto back = corpus.manifest().norm.invert(corpus.normalized(u));
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back[i], u.mel.frames[i], 1e-4);
}

TEST(Corpus, LoadErrors) {
  TempDir d("err");
  EXPECT_THROW(cp::load_corpus(d.path()), pxfer::IoError);

  pxfer::io::write_text(d / "manifest.json", "{not json");
  EXPECT_THROW(cp::load_corpus(d.path()), pxfer::FormatError);

  cp::CorpusManifest empty;
  empty.num_phonemes = 4;
  pxfer::io::write_text(d / "manifest.json", cp::to_json(empty).dump());
  EXPECT_THROW(cp::load_corpus(d.path()), pxfer::FormatError);

  fs::remove_all(d.path());
  const auto m = cp::generate_synthetic_corpus(small_spec(), d.path());
  auto j = pxfer::json::parse(pxfer::io::read_text(d / "manifest.json"));
  auto bad = j;
  bad["splits"]["train"][0]["speaker"] = 17;
  pxfer::io::write_text(d / "manifest.json", bad.dump());
  EXPECT_THROW(cp::load_corpus(d.path()), pxfer::FormatError);
  pxfer::io::write_text(d / "manifest.json", j.dump());

  const auto corpus = cp::load_corpus(d.path());
  const auto& info = m.train[0];
  const auto stem = corpus.stem(info);
  auto dur = corpus.load(info).phonemes;
  dur.durations[0] += 1;
  pxfer::features::write_durations(stem.string() + ".dur", dur);
  EXPECT_THROW(corpus.load(info), pxfer::AlignmentError);

  auto mel = bytes_of(stem.string() + ".mel");
  mel[0] ^= 0xFF;
  pxfer::io::write_file_atomic(stem.string() + ".mel", mel);
  EXPECT_THROW(corpus.load(info), pxfer::FormatError);

  fs::remove(stem.string() + ".mel");
  EXPECT_THROW(corpus.load(info), pxfer::IoError);
}

TEST(Corpus, IngestsAudioWithAlignment) {
  TempDir d("wav");
  pxfer::features::MelConfig mc;
  mc.n_mels = 20;
  cp::CorpusBuilder b(d.path(), mc, 4);
  b.add_speaker(0, "alice");
  pxfer::features::Wav w;
  w.samples.resize(4000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = 0.3 * std::sin(0.05 * double(i));
  // 4000 samples at hop 200 -> 20 frames.
  b.add_audio("a1", 0, w, {{1, 2}, {12, 8}}, cp::Split::kTrain);
  EXPECT_THROW(b.add_audio("a2", 0, w, {{1, 2}, {12, 7}}, cp::Split::kTrain), pxfer::AlignmentError);
  EXPECT_THROW(b.add_audio("a1", 0, w, {{1, 2}, {12, 8}}, cp::Split::kVal), pxfer::InvalidInput);
  b.finish();
  const auto c = cp::load_corpus(d.path());
  EXPECT_EQ(c.load(c.manifest().train[0]).frames(), 20u);
  EXPECT_FALSE(c.load(c.manifest().train[0]).prosody_truth.has_value());
}

TEST(Batching, BatchSizeOneHasNoPadding) {
  std::vector<cp::UtteranceInfo> items;
  for (std::size_t i = 0; i < 9; ++i) items.push_back({"u" + std::to_string(i), 0, 5 + i});
  const auto batches = cp::make_batches(items, 1, 3, 0);
  ASSERT_EQ(batches.size(), 9u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    ASSERT_EQ(b.size(), 1u);
    seen.insert(b[0]);
  }
  EXPECT_EQ(seen.size(), 9u);
  Array<float> x({6, 2}, 1.0f);
  const auto pb = cp::pad_batch({&x});
  EXPECT_EQ(pb.max_frames(), 6u);
  EXPECT_EQ(pb.frames.data, x.data);
}

TEST(Batching, PadsToLongestWithMask) {
  Array<float> a({5, 3}, 1.0f), b({7, 3}, 2.0f);
  const auto pb = cp::pad_batch({&a, &b});
  EXPECT_EQ(pb.frames.dims, (pxfer::nn::Dims{2, 7, 3}));
  float m0 = 0, m1 = 0;
  for (std::size_t t = 0; t < 7; ++t) {
    m0 += pb.mask.at(0, t);
    m1 += pb.mask.at(1, t);
  }
  EXPECT_EQ(m0, 5.0f);
  EXPECT_EQ(m1, 7.0f);
  EXPECT_EQ(pb.lengths, (std::vector<std::size_t>{5, 7}));
  const auto item0 = cp::batch_item(pb, 0);
  EXPECT_EQ(item0.at(4, 2), 1.0f);
  EXPECT_EQ(item0.at(5, 0), 0.0f);
}

TEST(Batching, DeterministicPerSeedAndEpochAndCoversAll) {
  std::vector<cp::UtteranceInfo> items;
  pxfer::nn::Rng rng(1);
  for (std::size_t i = 0; i < 37; ++i) items.push_back({"u" + std::to_string(i), 0, std::size_t(rng.integer(10, 90))});
  const auto a = cp::make_batches(items, 4, 11, 2);
  EXPECT_EQ(a, cp::make_batches(items, 4, 11, 2));
  EXPECT_NE(a, cp::make_batches(items, 4, 11, 3));
  EXPECT_NE(a, cp::make_batches(items, 4, 12, 2));
  std::multiset<std::size_t> all;
  for (const auto& b : a) {
    EXPECT_LE(b.size(), 4u);
    all.insert(b.begin(), b.end());
  }
  EXPECT_EQ(all.size(), 37u);
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), 37u);
  EXPECT_THROW(cp::make_batches(items, 0, 1, 0), pxfer::InvalidConfig);
}

// Instance-norm and L1 over a padded batch item equal the unpadded results.
TEST(Batching, PaddingIsInvisibleToMaskedStatistics) {
  pxfer::nn::Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t Ta = std::size_t(rng.integer(1, 12)), Tb = std::size_t(rng.integer(1, 12)), C = 4;
    auto a = pxfer::nn::normal_array<double>({Ta, C}, 2.0, rng);
    auto b = pxfer::nn::normal_array<double>({Tb, C}, 2.0, rng);
    auto ta = pxfer::nn::normal_array<double>({Ta, C}, 1.0, rng);
    const auto af = a.cast<float>(), bf = b.cast<float>();
    const auto pb = cp::pad_batch({&af, &bf});
    const std::size_t T = pb.max_frames();
    Array<double> padded = cp::batch_item(pb, 0).cast<double>();
    for (std::size_t i = 0; i < padded.size(); ++i)
      if (i < a.size()) padded[i] = a[i];  // exact double values in the valid region
    Array<double> tpad({T, C});
    std::copy(ta.data.begin(), ta.data.end(), tpad.data.begin());

    pxfer::nn::Tape<double> tape;
    const auto ref = pxfer::nn::instance_norm_time(tape.constant(a), Ta).value();
    const auto got = pxfer::nn::instance_norm_time(tape.constant(padded), pb.lengths[0]).value();
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-5);
    for (std::size_t i = ref.size(); i < got.size(); ++i) EXPECT_EQ(got[i], 0.0);

    const double l_ref = pxfer::nn::l1_loss(tape.constant(a), ta).value()[0];
    const double l_got = pxfer::nn::l1_loss(tape.constant(padded), tpad, pb.lengths[0]).value()[0];
    EXPECT_NEAR(l_got, l_ref, 1e-5);
  }
}
