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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pxfer/models/common.hpp"
#include "pxfer/models/config.hpp"

namespace pxfer::models {

// Bottlenecked speaker classifier. A mel [T x M] is treated as a 1 x T x M
// image, reduced by stride-2 convolutions, summarized by the last state of a
// GRU over the reduced time axis, and projected to the embedding E_s and to
// speaker logits.
template <typename S>
class SpeakerClassifier {
 public:
  struct Output {
    nn::Var<S> embedding;  // [B]
    nn::Var<S> logits;     // [1 x num_speakers]
  };

  SpeakerClassifier(const ClassifierConfig& cfg, std::size_t n_mels, std::size_t num_speakers, std::uint64_t seed)
      : cfg_(cfg), n_mels_(n_mels), num_speakers_(num_speakers) {
    cfg.validate();
    if (num_speakers < 2) throw InvalidConfig("speaker classifier needs at least 2 speakers");
    if (n_mels == 0) throw InvalidConfig("n_mels must be positive");
    nn::Rng rng(nn::mix_seed(seed, 0xC1A5));
    std::size_t cin = 1, v = n_mels;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      convs_.emplace_back(params_, "cls.conv" + std::to_string(i), cin, cfg.channels[i], 3, rng);
      cin = cfg.channels[i];
      v = (v + 1) / 2;
    }
    gru_.emplace(params_, "cls.gru", cin * v, cfg.gru, rng);
    bottleneck_.emplace(params_, "cls.bottleneck", cfg.gru, cfg.bottleneck, rng);
    out_.emplace(params_, "cls.out", cfg.bottleneck, num_speakers, rng);
    // Untrained output projection is zero: uniform class probabilities.
    out_->weight().value = nn::Array<S>(out_->weight().value.dims);
  }

  SpeakerClassifier(SpeakerClassifier&&) noexcept = default;

  Output forward(nn::Tape<S>& t, nn::Var<S> x) const {
    require_frames(x, n_mels_, "speaker classifier input");
    const std::size_t T = x.value().rows();
    if (T < cfg_.min_frames) x = nn::gather_rows(x, reflect_indices(T, cfg_.min_frames));
    nn::Var<S> h = nn::reshape(x, nn::Dims{1, x.value().rows(), n_mels_});
    const nn::Conv2dSpec spec{2, 2, 1, 1};
    for (const auto& c : convs_) h = leaky(c(t, h, spec), kSlope);
    const std::size_t C = h.dim(0), U = h.dim(1), V = h.dim(2);
    h = nn::reshape(nn::permute3(h, {1, 0, 2}), nn::Dims{U, C * V});
    h = (*gru_)(t, h, nn::Direction::kForward);
    nn::Var<S> last = nn::slice_rows(h, U - 1, U);
    nn::Var<S> e = (*bottleneck_)(t, last);
    Output o{nn::reshape(e, nn::Dims{cfg_.bottleneck}), (*out_)(t, e)};
    return o;
  }

  Output forward(nn::Tape<S>& t, const nn::Array<S>& x) const { return forward(t, t.constant(x)); }

  // Value-only helpers.
  nn::Array<S> embed(const nn::Array<S>& x) const {
    nn::Tape<S> t;
    return forward(t, x).embedding.value();
  }
  std::vector<S> probabilities(const nn::Array<S>& x) const {
    nn::Tape<S> t;
    return nn::softmax(forward(t, x).logits.value()).data;
  }

  nn::ParameterSet<S>& params() { return params_; }
  const nn::ParameterSet<S>& params() const { return params_; }
  const ClassifierConfig& config() const { return cfg_; }
  std::size_t n_mels() const { return n_mels_; }
  std::size_t num_speakers() const { return num_speakers_; }
  std::size_t embedding_dim() const { return cfg_.bottleneck; }

 private:
  static constexpr double kSlope = 0.2;

  ClassifierConfig cfg_;
  std::size_t n_mels_, num_speakers_;
  nn::ParameterSet<S> params_;
  std::vector<nn::Conv2d<S>> convs_;
  std::optional<nn::Gru<S>> gru_;
  std::optional<nn::Dense<S>> bottleneck_;
  std::optional<nn::Dense<S>> out_;
};

// Coordinate-wise mean of a non-empty set of embeddings.
template <typename S>
nn::Array<S> centroid(const std::vector<nn::Array<S>>& embeddings) {
  if (embeddings.empty()) throw InvalidInput("centroid of an empty embedding set");
  nn::Array<S> c(embeddings[0].dims);
  for (const auto& e : embeddings)
    if (e.dims != c.dims) throw InvalidInput("centroid: embeddings have different widths");
  // Sorted per-coordinate summation makes the result independent of input order.
  std::vector<S> col(embeddings.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t k = 0; k < embeddings.size(); ++k) col[k] = embeddings[k][i];
    std::sort(col.begin(), col.end());
    double acc = 0;
    for (S v : col) acc += double(v);
    c[i] = S(acc / double(embeddings.size()));
  }
  return c;
}

}  // namespace pxfer::models
