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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pxfer/models/common.hpp"
#include "pxfer/models/config.hpp"

namespace pxfer::models {

// Row indices of a W-frame window of a T-frame mel: a uniform random start in
// [0, T-W], or the whole utterance reflect-padded to W when T < W.
inline std::vector<std::size_t> window_indices(std::size_t T, std::size_t W, nn::Rng& rng) {
  if (T == 0 || W == 0) throw InvalidInput("window sampling needs T >= 1 and W >= 1");
  if (T < W) return reflect_indices(T, W);
  const std::size_t start = rng.index(T - W + 1);
  std::vector<std::size_t> idx(W);
  for (std::size_t i = 0; i < W; ++i) idx[i] = start + i;
  return idx;
}

// Self-attention over the positions of a [C x U x V] feature map:
// out = x + gamma * softmax(Q K^T) V, with learned gain gamma starting at 0.
template <typename S>
class SelfAttention {
 public:
  SelfAttention(nn::ParameterSet<S>& ps, const std::string& name, std::size_t channels, std::size_t ratio,
                nn::Rng& rng)
      : q_(ps, name + ".q", channels, channels / ratio, rng),
        k_(ps, name + ".k", channels, channels / ratio, rng),
        v_(ps, name + ".v", channels, channels, rng),
        gamma_(&ps.add(name + ".gamma", nn::Array<S>({1}))) {}

  nn::Var<S> operator()(nn::Tape<S>& t, nn::Var<S> x, nn::Var<S>* weights = nullptr) const {
    const std::size_t C = x.dim(0), U = x.dim(1), V = x.dim(2);
    nn::Var<S> pos = nn::transpose(nn::reshape(x, nn::Dims{C, U * V}));  // [N x C]
    nn::Var<S> a = nn::softmax_rows(nn::matmul_nt(q_(t, pos), k_(t, pos)));
    if (weights) *weights = a;
    nn::Var<S> o = nn::add(pos, nn::scale_by(nn::matmul(a, v_(t, pos)), t.param(*gamma_)));
    return nn::reshape(nn::transpose(o), nn::Dims{C, U, V});
  }

  nn::Parameter<S>& gamma() { return *gamma_; }

 private:
  nn::Dense<S> q_, k_, v_;
  nn::Parameter<S>* gamma_;
};

// Unconditional window discriminator: conv2d stack over a 1 x W x M window
// (frequency stride 2 everywhere, time stride 2 on layers 2-3), self-attention
// after a configurable layer, global average pooling and a scalar head.
template <typename S>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::size_t n_mels, double slope, std::uint64_t seed)
      : cfg_(cfg), n_mels_(n_mels), slope_(slope) {
    cfg.validate();
    nn::Rng rng(nn::mix_seed(seed, 0xD15C));
    std::size_t cin = 1;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      convs_.emplace_back(params_, "disc.conv" + std::to_string(i), cin, cfg.channels[i], 3, rng);
      cin = cfg.channels[i];
      if (i + 1 == cfg.attention_after)
        attn_.emplace(params_, "disc.attn", cin, cfg.attention_ratio, rng);
    }
    head_.emplace(params_, "disc.head", cin, 1, rng);
  }

  Discriminator(Discriminator&&) noexcept = default;

  // window: [W x M] -> scalar score [1 x 1].
  nn::Var<S> forward(nn::Tape<S>& t, nn::Var<S> window, nn::Var<S>* attention = nullptr) const {
    const auto& w = window.value();
    if (w.rank() != 2 || w.rows() != cfg_.window || w.cols() != n_mels_)
      throw InvalidInput("discriminator expects a [" + std::to_string(cfg_.window) + " x " +
                         std::to_string(n_mels_) + "] window, got " + nn::dims_str(w.dims));
    nn::Var<S> h = nn::reshape(window, nn::Dims{1, cfg_.window, n_mels_});
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      const std::size_t su = (i == 1 || i == 2) ? 2 : 1;
      h = leaky(convs_[i](t, h, nn::Conv2dSpec{su, 2, 1, 1}), slope_);
      if (i + 1 == cfg_.attention_after) h = (*attn_)(t, h, attention);
    }
    const std::size_t C = h.dim(0), P = h.dim(1) * h.dim(2);
    nn::Var<S> pooled = nn::mean_rows(nn::transpose(nn::reshape(h, nn::Dims{C, P})));
    return (*head_)(t, nn::reshape(pooled, nn::Dims{1, C}));
  }

  // Scores of several windows as one [n] vector.
  nn::Var<S> score(nn::Tape<S>& t, const std::vector<nn::Var<S>>& windows) const {
    std::vector<nn::Var<S>> s;
    for (const auto& w : windows) s.push_back(forward(t, w));
    return nn::reshape(nn::concat_cols<S>(s), nn::Dims{windows.size()});
  }

  SelfAttention<S>& attention() { return *attn_; }
  nn::ParameterSet<S>& params() { return params_; }
  const nn::ParameterSet<S>& params() const { return params_; }
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::size_t n_mels_;
  double slope_;
  nn::ParameterSet<S> params_;
  std::vector<nn::Conv2d<S>> convs_;
  std::optional<SelfAttention<S>> attn_;
  std::optional<nn::Dense<S>> head_;
};

}  // namespace pxfer::models
