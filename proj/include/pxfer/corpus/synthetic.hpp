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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "pxfer/corpus/corpus.hpp"
#include "pxfer/nn/init.hpp"

namespace pxfer::corpus {

struct SyntheticSpec {
  int num_speakers = 3;
  int num_phonemes = 12;
  int utterances_per_speaker = 20;
  std::uint64_t seed = 1;
  int n_mels = 80;
  int unseen_speakers = 0;  // extra speakers whose utterances all go to the test split
  double noise_std = 0.05;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  int min_phonemes = 5, max_phonemes = 20;
  int min_duration = 3, max_duration = 10;

  void validate() const {
    if (num_speakers < 2) throw InvalidConfig("synthetic corpus needs at least 2 speakers");
    if (num_phonemes < 3) throw InvalidConfig("synthetic corpus needs at least 3 phonemes");
    if (utterances_per_speaker < 1) throw InvalidConfig("utterances_per_speaker must be positive");
    if (n_mels < 2) throw InvalidConfig("n_mels must be at least 2");
    if (unseen_speakers < 0) throw InvalidConfig("unseen_speakers must be non-negative");
    if (noise_std < 0) throw InvalidConfig("noise_std must be non-negative");
    if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction >= 1)
      throw InvalidConfig("split fractions must be non-negative and leave room for training");
    if (min_phonemes < 1 || max_phonemes < min_phonemes) throw InvalidConfig("invalid phoneme length range");
    if (min_duration < 1 || max_duration < min_duration) throw InvalidConfig("invalid duration range");
  }
};

inline json to_json(const SyntheticSpec& s) {
  return json{{"num_speakers", s.num_speakers},
              {"num_phonemes", s.num_phonemes},
              {"utterances_per_speaker", s.utterances_per_speaker},
              {"seed", s.seed},
              {"n_mels", s.n_mels},
              {"unseen_speakers", s.unseen_speakers},
              {"noise_std", s.noise_std},
              {"val_fraction", s.val_fraction},
              {"test_fraction", s.test_fraction},
              {"min_phonemes", s.min_phonemes},
              {"max_phonemes", s.max_phonemes},
              {"min_duration", s.min_duration},
              {"max_duration", s.max_duration}};
}

inline void from_json(const json& j, SyntheticSpec& s, const std::string& where) {
  StrictObject o(j, where);
  o.get("num_speakers", s.num_speakers).get("num_phonemes", s.num_phonemes);
  o.get("utterances_per_speaker", s.utterances_per_speaker).get("seed", s.seed).get("n_mels", s.n_mels);
  o.get("unseen_speakers", s.unseen_speakers).get("noise_std", s.noise_std);
  o.get("val_fraction", s.val_fraction).get("test_fraction", s.test_fraction);
  o.get("min_phonemes", s.min_phonemes).get("max_phonemes", s.max_phonemes);
  o.get("min_duration", s.min_duration).get("max_duration", s.max_duration);
  o.finish();
  s.validate();
}

// The fixed random ingredients of a synthetic corpus: one spectral template
// per phoneme and one additive per-bin signature per speaker.
struct SyntheticWorld {
  int n_mels = 0;
  std::vector<std::vector<double>> templates;   // [phoneme][bin]
  std::vector<std::vector<double>> signatures;  // [speaker][bin]

  static SyntheticWorld make(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticWorld w;
    w.n_mels = spec.n_mels;
    const int M = spec.n_mels;
    nn::Rng rng(nn::mix_seed(spec.seed, 1));
    for (int p = 0; p < spec.num_phonemes; ++p) {
      std::vector<double> t(std::size_t(M), p == kPausePhoneme ? -6.0 : -4.0);
      if (p != kPausePhoneme) {
        const int bumps = rng.integer(2, 4);
        for (int b = 0; b < bumps; ++b) {
          const double amp = rng.uniform(1.0, 4.0);
          const double center = rng.uniform(0.0, M - 1.0);
          const double width = rng.uniform(1.5, std::max(2.0, M / 8.0));
          for (int m = 0; m < M; ++m) t[m] += amp * std::exp(-0.5 * std::pow((m - center) / width, 2));
        }
      }
      w.templates.push_back(std::move(t));
    }
    const int speakers = spec.num_speakers + spec.unseen_speakers;
    for (int s = 0; s < speakers; ++s) {
      nn::Rng srng(nn::mix_seed(spec.seed, 1000 + std::uint64_t(s)));
      const double offset = srng.uniform(-1.5, 1.5);
      const double tilt = srng.uniform(-2.0, 2.0);
      std::vector<double> sig(static_cast<std::size_t>(M));
      double a[2], f[2], ph[2];
      for (int k = 0; k < 2; ++k) {
        a[k] = srng.uniform(0.0, 0.4);
        f[k] = srng.uniform(0.5, 3.0);
        ph[k] = srng.uniform(0.0, 2 * std::numbers::pi);
      }
      for (int m = 0; m < M; ++m) {
        const double x = double(m) / double(M - 1);
        sig[m] = offset + tilt * (x - 0.5);
        for (int k = 0; k < 2; ++k) sig[m] += a[k] * std::sin(2 * std::numbers::pi * f[k] * x + ph[k]);
      }
      w.signatures.push_back(std::move(sig));
    }
    return w;
  }

  // mel[t][m] = template[phoneme(t)][m] + signature[speaker][m] + contour[t] + noise.
  nn::Array<float> render(int speaker, const PhonemeSequence& phonemes, const std::vector<double>& contour,
                          nn::Rng* noise_rng, double noise_std) const {
    const auto up = features::upsample_phonemes(phonemes, contour.size());
    const std::size_t T = contour.size();
    const auto& sig = signatures.at(std::size_t(speaker));
    nn::Array<float> mel({T, std::size_t(n_mels)});
    for (std::size_t t = 0; t < T; ++t) {
      const auto& tpl = templates.at(std::size_t(up.ids[t]));
      for (int m = 0; m < n_mels; ++m) {
        double v = tpl[m] + sig[m] + contour[t];
        if (noise_rng && noise_std > 0) v += noise_std * noise_rng->normal();
        mel.at(t, std::size_t(m)) = float(v);
      }
    }
    return mel;
  }
};

// Random phoneme sequence without adjacent repeats.
inline PhonemeSequence random_phonemes(const SyntheticSpec& spec, nn::Rng& rng) {
  PhonemeSequence p;
  const int n = rng.integer(spec.min_phonemes, spec.max_phonemes);
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    int id;
    do id = rng.integer(0, spec.num_phonemes - 1);
    while (id == prev);
    p.ids.push_back(id);
    p.durations.push_back(rng.integer(spec.min_duration, spec.max_duration));
    prev = id;
  }
  return p;
}

// Zero-mean sum of 1-3 slow sinusoids, 0.5-3 cycles per utterance.
inline std::vector<double> random_contour(std::size_t T, nn::Rng& rng) {
  const int k = rng.integer(1, 3);
  std::vector<double> c(T, 0.0);
  for (int i = 0; i < k; ++i) {
    const double amp = rng.uniform(0.3, 1.0);
    const double cycles = rng.uniform(0.5, 3.0);
    const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
    for (std::size_t t = 0; t < T; ++t)
      c[t] += amp * std::sin(2 * std::numbers::pi * cycles * double(t) / double(T) + phase);
  }
  double mean = 0;
  for (double v : c) mean += v;
  mean /= double(T);
  for (double& v : c) v -= mean;
  return c;
}

inline std::string speaker_label(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%02d", id);
  return buf;
}

inline Utterance synthesize_utterance(const SyntheticWorld& world, const SyntheticSpec& spec, int speaker, int index) {
  nn::Rng rng(nn::mix_seed(spec.seed, (std::uint64_t(speaker) << 32) + std::uint64_t(index) + 7));
  Utterance u;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%03d", speaker_label(speaker).c_str(), index);
  u.id = buf;
  u.speaker = speaker;
  u.phonemes = random_phonemes(spec, rng);
  const auto contour = random_contour(u.phonemes.total_frames(), rng);
  const features::MelConfig mc;
  u.mel.frames = world.render(speaker, u.phonemes, contour, &rng, spec.noise_std);
  u.mel.sample_rate = mc.sample_rate;
  u.mel.hop = mc.hop;
  u.prosody_truth = std::vector<float>(contour.begin(), contour.end());
  return u;
}

inline json to_json(const SyntheticWorld& w) {
  return json{{"templates", w.templates}, {"signatures", w.signatures}};
}

// Writes a synthetic corpus to `root`. The phoneme templates and speaker
// signatures go to root/synthetic_truth.json; per-utterance contours to .truth.
inline CorpusManifest generate_synthetic_corpus(const SyntheticSpec& spec, const fs::path& root) {
  spec.validate();
  const SyntheticWorld world = SyntheticWorld::make(spec);
  features::MelConfig mel;
  mel.n_mels = spec.n_mels;
  CorpusBuilder builder(root, mel, spec.num_phonemes);
  const int total = spec.num_speakers + spec.unseen_speakers;
  for (int s = 0; s < total; ++s) builder.add_speaker(s, speaker_label(s));

  const int U = spec.utterances_per_speaker;
  int n_test = int(std::lround(U * spec.test_fraction));
  int n_val = int(std::lround(U * spec.val_fraction));
  while (n_test + n_val >= U && (n_test > 0 || n_val > 0)) (n_val > 0 ? n_val : n_test)--;
  for (int s = 0; s < total; ++s) {
    const bool unseen = s >= spec.num_speakers;
    for (int i = 0; i < U; ++i) {
      const Split split = unseen || i < n_test ? Split::kTest : i < n_test + n_val ? Split::kVal : Split::kTrain;
      builder.add(synthesize_utterance(world, spec, s, i), split);
    }
  }
  builder.set_generator(to_json(spec));
  io::write_text(root / "synthetic_truth.json", to_json(world).dump() + "\n");
  return builder.finish();
}

}  // namespace pxfer::corpus
