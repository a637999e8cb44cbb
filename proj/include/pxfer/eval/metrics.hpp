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

// Objective metrics over frozen models: prosody-contour correlation, cycle
// consistency of the latent, linear speaker-leakage probes, transfer accuracy.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "pxfer/corpus/corpus.hpp"
#include "pxfer/json_util.hpp"
#include "pxfer/models/reference_encoder.hpp"
#include "pxfer/nn/init.hpp"
#include "pxfer/train/bundle.hpp"
#include "pxfer/train/trainer.hpp"

namespace pxfer::eval {

using nn::Array;

// ---- prosody contour ----------------------------------------------------------------

// Per-frame log energy log(sum_m exp(mel)) of a natural-log mel.
inline std::vector<double> energy_contour(const Array<float>& mel) {
  std::vector<double> e(mel.rows());
  for (std::size_t t = 0; t < mel.rows(); ++t) {
    double mx = -INFINITY;
    for (std::size_t m = 0; m < mel.cols(); ++m) mx = std::max(mx, double(mel.at(t, m)));
    double s = 0;
    for (std::size_t m = 0; m < mel.cols(); ++m) s += std::exp(double(mel.at(t, m)) - mx);
    e[t] = mx + std::log(s);
  }
  return e;
}

// Log energy of a frame sitting `db_above` dB over the mel floor in every bin.
inline double silence_floor(const features::MelConfig& mel, double db_above = 20.0) {
  return std::log(double(mel.n_mels) * mel.log_floor) + db_above * std::log(10.0) / 10.0;
}

struct Correlation {
  std::optional<double> r;  // empty: fewer than 2 frames or a constant contour
  std::size_t frames = 0;
};

inline Correlation pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidInput("pearson: length mismatch");
  Correlation c;
  c.frames = a.size();
  if (a.size() < 2) return c;
  const double n = double(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0 || sbb <= 0) return c;
  c.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return c;
}

// Pearson r of the energy contours over frames where both exceed `floor`.
inline Correlation prosody_correlation(const Array<float>& source_mel, const Array<float>& out_mel, double floor) {
  if (source_mel.rows() != out_mel.rows())
    throw AlignmentError("prosody_correlation: source has " + std::to_string(source_mel.rows()) +
                         " frames, output has " + std::to_string(out_mel.rows()));
  const auto a = energy_contour(source_mel), b = energy_contour(out_mel);
  std::vector<double> ka, kb;
  for (std::size_t t = 0; t < a.size(); ++t)
    if (a[t] > floor && b[t] > floor) {
      ka.push_back(a[t]);
      kb.push_back(b[t]);
    }
  return pearson(ka, kb);
}

// ---- cycle consistency -----------------------------------------------------------------

struct CycleEntry {
  std::string id;
  int source = 0, target = 0;
  double mean_abs_diff = 0;  // mean |Z(A->B) - Z(B->A)|
  double mean_abs_z = 0;     // mean |Z(A->B)|
};

// encode(x, e) -> z_hat, decode(z_hat) -> x_B, embed(x) -> e.
template <class Encode, class Decode, class Embed>
CycleEntry cycle_entry(const Array<float>& x_a, const Array<float>& e_a, Encode&& encode, Decode&& decode,
                       Embed&& embed, models::EncodeMode mode = models::EncodeMode::kDeterministic) {
  if (mode != models::EncodeMode::kDeterministic)
    throw InvalidInput("cycle consistency is only defined for the deterministic encoder");
  const Array<float> z_ab = encode(x_a, e_a);
  const Array<float> x_b = decode(z_ab);
  const Array<float> z_ba = encode(x_b, embed(x_b));
  if (z_ab.dims != z_ba.dims) throw InternalError("cycle latents differ in shape");
  CycleEntry c;
  for (std::size_t i = 0; i < z_ab.size(); ++i) {
    c.mean_abs_diff += std::abs(double(z_ab[i]) - double(z_ba[i]));
    c.mean_abs_z += std::abs(double(z_ab[i]));
  }
  c.mean_abs_diff /= double(z_ab.size());
  c.mean_abs_z /= double(z_ab.size());
  return c;
}

inline CycleEntry cycle_consistency(const train::GeneratorBundle& b, const train::Example& a, int target,
                                    models::EncodeMode mode = models::EncodeMode::kDeterministic) {
  const auto& p = a.utt.phonemes;
  auto c = cycle_entry(
      a.x, a.e, [&](const Array<float>& x, const Array<float>& e) { return b.gen.encode_latent(x, p, e); },
      [&](const Array<float>& z) { return b.gen.decode(p, z, b.centroid(target)); },
      [&](const Array<float>& x) { return b.classifier.embed(x); }, mode);
  c.id = a.utt.id;
  c.source = a.utt.speaker;
  c.target = target;
  return c;
}

struct CycleReport {
  double mean_abs_diff = 0;
  double relative = 0;  // mean_abs_diff / mean |Z(A->B)|
  std::vector<CycleEntry> entries;
};

inline CycleReport summarize(std::vector<CycleEntry> entries) {
  CycleReport r;
  double z = 0;
  for (const auto& e : entries) {
    r.mean_abs_diff += e.mean_abs_diff;
    z += e.mean_abs_z;
  }
  if (!entries.empty()) {
    r.mean_abs_diff /= double(entries.size());
    z /= double(entries.size());
  }
  r.relative = z > 0 ? r.mean_abs_diff / z : 0.0;
  r.entries = std::move(entries);
  return r;
}

// Every example against every training speaker other than its own.
inline CycleReport cycle_report(const train::GeneratorBundle& b, const std::vector<train::Example>& xs) {
  std::vector<CycleEntry> out;
  for (const auto& a : xs)
    for (const auto& [target, _] : b.centroids)
      if (target != a.utt.speaker) out.push_back(cycle_consistency(b, a, target));
  return summarize(std::move(out));
}

// ---- linear probes ---------------------------------------------------------------------

struct ProbeConfig {
  double test_fraction = 0.3;
  double l2 = 1e-2;
  double lr = 0.5;
  int iterations = 500;
};

// Multinomial logistic regression on standardized features, full-batch gradient
// descent from zero weights. Deterministic.
class LinearProbe {
 public:
  LinearProbe(const std::vector<std::vector<double>>& X, const std::vector<int>& y, int classes,
              const ProbeConfig& cfg) : classes_(classes) {
    if (X.empty()) throw InvalidInput("probe: no training data");
    const std::size_t D = X[0].size(), N = X.size();
    mean_.assign(D, 0.0);
    scale_.assign(D, 0.0);
    for (const auto& x : X)
      for (std::size_t d = 0; d < D; ++d) mean_[d] += x[d] / double(N);
    for (const auto& x : X)
      for (std::size_t d = 0; d < D; ++d) scale_[d] += (x[d] - mean_[d]) * (x[d] - mean_[d]) / double(N);
    for (auto& s : scale_) s = s > 1e-12 ? 1.0 / std::sqrt(s) : 0.0;

    W_.assign((D + 1) * std::size_t(classes), 0.0);
    std::vector<double> grad(W_.size()), p(static_cast<std::size_t>(classes));
    for (int it = 0; it < cfg.iterations; ++it) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t n = 0; n < N; ++n) {
        const auto z = standardize(X[n]);
        probs(z, p);
        p[std::size_t(y[n])] -= 1.0;
        for (std::size_t d = 0; d <= D; ++d) {
          const double zd = d < D ? z[d] : 1.0;
          for (int k = 0; k < classes; ++k) grad[d * std::size_t(classes) + std::size_t(k)] += zd * p[std::size_t(k)] / double(N);
        }
      }
      for (std::size_t i = 0; i < W_.size(); ++i) {
        const bool bias = i >= D * std::size_t(classes);
        W_[i] -= cfg.lr * (grad[i] + (bias ? 0.0 : cfg.l2 * W_[i]));
      }
    }
  }

  int predict(const std::vector<double>& x) const {
    std::vector<double> p(static_cast<std::size_t>(classes_));
    probs(standardize(x), p);
    return int(std::max_element(p.begin(), p.end()) - p.begin());
  }

  double accuracy(const std::vector<std::vector<double>>& X, const std::vector<int>& y) const {
    if (X.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < X.size(); ++i) ok += predict(X[i]) == y[i];
    return double(ok) / double(X.size());
  }

 private:
  std::vector<double> standardize(const std::vector<double>& x) const {
    if (x.size() != mean_.size()) throw InvalidInput("probe: feature width mismatch");
    std::vector<double> z(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) z[d] = (x[d] - mean_[d]) * scale_[d];
    return z;
  }

  void probs(const std::vector<double>& z, std::vector<double>& p) const {
    const std::size_t D = z.size(), K = std::size_t(classes_);
    double mx = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      double s = W_[D * K + k];
      for (std::size_t d = 0; d < D; ++d) s += z[d] * W_[d * K + k];
      p[k] = s;
      mx = std::max(mx, s);
    }
    double tot = 0;
    for (auto& v : p) tot += (v = std::exp(v - mx));
    for (auto& v : p) v /= tot;
  }

  int classes_;
  std::vector<double> mean_, scale_, W_;
};

// Per-class seeded split: round(test_fraction * n) test items per class, at
// least one when the class has two or more.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const std::vector<int>& y,
                                                                                      double test_fraction,
                                                                                      std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < y.size(); ++i) by[y[i]].push_back(i);
  nn::Rng rng(nn::mix_seed(seed, 0x5B117));
  std::vector<std::size_t> tr, te;
  for (auto& [_, idx] : by) {
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    std::size_t nt = std::size_t(std::lround(test_fraction * double(idx.size())));
    if (idx.size() >= 2) nt = std::clamp<std::size_t>(nt, 1, idx.size() - 1);
    else nt = 0;
    te.insert(te.end(), idx.begin(), idx.begin() + std::ptrdiff_t(nt));
    tr.insert(tr.end(), idx.begin() + std::ptrdiff_t(nt), idx.end());
  }
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  return {tr, te};
}

inline double probe_accuracy(const std::vector<std::vector<double>>& X, const std::vector<int>& y, int classes,
                             const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te,
                             const ProbeConfig& cfg) {
  auto pick = [](const auto& v, const std::vector<std::size_t>& idx) {
    std::decay_t<decltype(v)> out;
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
  };
  LinearProbe p(pick(X, tr), pick(y, tr), classes, cfg);
  return p.accuracy(pick(X, te), pick(y, te));
}

inline std::vector<double> mean_pool(const Array<float>& a) {
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t t = 0; t < a.rows(); ++t)
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += double(a.at(t, c)) / double(a.rows());
  return out;
}

struct LeakageReport {
  double latent_accuracy = 0;    // probe on mean-pooled Z
  double raw_accuracy = 0;       // probe on mean-pooled normalized mels
  double shuffled_accuracy = 0;  // latent probe trained on permuted labels
  double chance = 0;
  std::size_t speakers = 0, train_items = 0, test_items = 0;
};

// Probes the source speaker of `xs` (examples with embeddings filled in).
inline LeakageReport leakage_probe(const train::GeneratorBundle& b, const std::vector<train::Example>& xs,
                                   std::uint64_t seed, const ProbeConfig& cfg = {}) {
  std::map<int, int> cls;
  for (const auto& ex : xs) cls.emplace(ex.utt.speaker, 0);
  if (cls.size() < 2) throw InvalidInput("leakage probe needs at least 2 speakers");
  int k = 0;
  for (auto& [_, c] : cls) c = k++;

  std::vector<std::vector<double>> Z, R;
  std::vector<int> y;
  for (const auto& ex : xs) {
    Z.push_back(mean_pool(b.gen.encode_latent(ex.x, ex.utt.phonemes, ex.e)));
    R.push_back(mean_pool(ex.x));
    y.push_back(cls.at(ex.utt.speaker));
  }
  const auto [tr, te] = stratified_split(y, cfg.test_fraction, seed);
  LeakageReport r;
  r.speakers = cls.size();
  r.chance = 1.0 / double(cls.size());
  r.train_items = tr.size();
  r.test_items = te.size();
  r.latent_accuracy = probe_accuracy(Z, y, k, tr, te, cfg);
  r.raw_accuracy = probe_accuracy(R, y, k, tr, te, cfg);
  auto shuffled = y;
  nn::Rng rng(nn::mix_seed(seed, 0x5AF7));
  std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
  r.shuffled_accuracy = probe_accuracy(Z, shuffled, k, tr, te, cfg);
  return r;
}

// ---- transfer ----------------------------------------------------------------------------

struct TransferEntry {
  std::string id;
  int source = 0, target = 0, predicted = 0;
  std::optional<double> r;
};

struct TransferReport {
  double speaker_accuracy = 0;  // output classified as the target
  double mean_correlation = 0;  // over entries with a defined r
  double min_correlation = 0;
  std::size_t undefined_correlations = 0;
  std::vector<TransferEntry> entries;
};

// Every example rendered as every training speaker other than its source.
inline TransferReport transfer_report(const train::GeneratorBundle& b, const std::vector<train::Example>& xs,
                                      double floor) {
  TransferReport r;
  std::size_t hits = 0, defined = 0;
  r.min_correlation = 1.0;
  for (const auto& ex : xs)
    for (const auto& [target, _] : b.centroids) {
      if (target == ex.utt.speaker) continue;
      const Array<float> out = b.transfer(ex.x, ex.utt.phonemes, target);
      TransferEntry e{ex.utt.id, ex.utt.speaker, target, b.classifier.predict(out), std::nullopt};
      e.r = prosody_correlation(ex.utt.mel.frames, b.norm().invert(out), floor).r;
      hits += e.predicted == target;
      if (e.r) {
        ++defined;
        r.mean_correlation += *e.r;
        r.min_correlation = std::min(r.min_correlation, *e.r);
      } else {
        ++r.undefined_correlations;
      }
      r.entries.push_back(std::move(e));
    }
  if (!r.entries.empty()) r.speaker_accuracy = double(hits) / double(r.entries.size());
  if (defined) r.mean_correlation /= double(defined);
  else r.min_correlation = 0;
  return r;
}

// Examples with classifier embeddings, for evaluation.
inline std::vector<train::Example> embedded_examples(const corpus::Corpus& c, corpus::Split split,
                                                     const train::ClassifierBundle& cls) {
  auto xs = train::load_examples(c, split);
  for (auto& ex : xs) ex.e = cls.embed(ex.x);
  return xs;
}

// ---- JSON ----------------------------------------------------------------------------------

inline json to_json(const CycleReport& r, bool entries = true) {
  json j{{"mean_abs_diff", r.mean_abs_diff}, {"relative", r.relative}, {"pairs", r.entries.size()}};
  if (entries) {
    json a = json::array();
    for (const auto& e : r.entries)
      a.push_back({{"id", e.id}, {"source", e.source}, {"target", e.target}, {"mean_abs_diff", e.mean_abs_diff},
                   {"mean_abs_z", e.mean_abs_z}});
    j["entries"] = a;
  }
  return j;
}

inline json to_json(const LeakageReport& r) {
  return json{{"latent_accuracy", r.latent_accuracy}, {"raw_accuracy", r.raw_accuracy},
              {"shuffled_accuracy", r.shuffled_accuracy}, {"chance", r.chance},
              {"speakers", r.speakers}, {"train_items", r.train_items}, {"test_items", r.test_items}};
}

inline json to_json(const TransferReport& r, bool entries = true) {
  json j{{"speaker_accuracy", r.speaker_accuracy}, {"mean_correlation", r.mean_correlation},
         {"min_correlation", r.min_correlation}, {"undefined_correlations", r.undefined_correlations},
         {"pairs", r.entries.size()}};
  if (entries) {
    json a = json::array();
    for (const auto& e : r.entries)
      a.push_back({{"id", e.id}, {"source", e.source}, {"target", e.target}, {"predicted", e.predicted},
                   {"r", e.r ? json(*e.r) : json(nullptr)}});
    j["entries"] = a;
  }
  return j;
}

}  // namespace pxfer::eval
