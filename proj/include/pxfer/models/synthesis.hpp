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
#include <optional>
#include <string>
#include <vector>

#include "pxfer/features/phonemes.hpp"
#include "pxfer/models/common.hpp"
#include "pxfer/models/config.hpp"

namespace pxfer::models {

// Frame-level phoneme encodings: embedding lookup of the upsampled ids,
// conv1d stack, bi-GRU.
template <typename S>
class PhonemeEncoder {
 public:
  PhonemeEncoder(nn::ParameterSet<S>& ps, const PhonemeEncoderConfig& cfg, std::size_t inventory, double slope,
                 nn::Rng& rng)
      : cfg_(cfg), slope_(slope), embed_(ps, "phon.embed", inventory, cfg.embed, rng) {
    cfg.validate();
    std::size_t cin = cfg.embed;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      convs_.emplace_back(ps, "phon.conv" + std::to_string(i), cin, cfg.channels[i], cfg.kernel, rng);
      cin = cfg.channels[i];
    }
    gru_.emplace(ps, "phon.gru", cin, cfg.gru_per_dir, rng);
  }

  // ids: one phoneme id per frame -> [T x width()]
  nn::Var<S> operator()(nn::Tape<S>& t, const std::vector<int>& ids) const {
    if (ids.empty()) throw InvalidInput("phoneme encoder: empty phoneme sequence");
    nn::Var<S> h = embed_(t, ids);
    const auto spec = nn::Conv1dSpec::same(cfg_.kernel);
    for (const auto& c : convs_) h = leaky(c(t, h, spec), slope_);
    return (*gru_)(t, h);
  }

  std::size_t width() const { return cfg_.width(); }

 private:
  PhonemeEncoderConfig cfg_;
  double slope_;
  nn::Embedding<S> embed_;
  std::vector<nn::Conv1d<S>> convs_;
  std::optional<nn::BiGru<S>> gru_;
};

// Parallel decoder: [y_t, z_hat_t, e] per frame -> conv1d stack -> bi-GRU ->
// linear projection to mel bins. Output frames never feed back into the graph.
template <typename S>
class Decoder {
 public:
  Decoder(nn::ParameterSet<S>& ps, const DecoderConfig& cfg, std::size_t y_width, std::size_t z_width,
          std::size_t e_width, std::size_t n_mels, double slope, nn::Rng& rng)
      : cfg_(cfg), slope_(slope), y_width_(y_width), z_width_(z_width), e_width_(e_width) {
    cfg.validate();
    std::size_t cin = y_width + z_width + e_width;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      convs_.emplace_back(ps, "dec.conv" + std::to_string(i), cin, cfg.channels[i], cfg.kernel, rng);
      cin = cfg.channels[i];
    }
    gru_.emplace(ps, "dec.gru", cin, cfg.gru_per_dir, rng);
    out_.emplace(ps, "dec.out", 2 * cfg.gru_per_dir, n_mels, rng);
  }

  nn::Var<S> operator()(nn::Tape<S>& t, nn::Var<S> y, nn::Var<S> z_hat, nn::Var<S> e) const {
    require_frames(y, y_width_, "decoder phoneme encodings");
    require_frames(z_hat, z_width_, "decoder latent");
    if (e.value().size() != e_width_) throw InvalidInput("decoder: speaker embedding width mismatch");
    const std::size_t T = y.value().rows();
    if (z_hat.value().rows() != T)
      throw AlignmentError("decoder: latent has " + std::to_string(z_hat.value().rows()) + " frames, phonemes " +
                           std::to_string(T));
    nn::Var<S> h = nn::concat_cols<S>({y, z_hat, nn::tile_rows(e, T)});
    const auto spec = nn::Conv1dSpec::same(cfg_.kernel);
    for (const auto& c : convs_) h = leaky(c(t, h, spec), slope_);
    return (*out_)(t, (*gru_)(t, h));
  }

 private:
  DecoderConfig cfg_;
  double slope_;
  std::size_t y_width_, z_width_, e_width_;
  std::vector<nn::Conv1d<S>> convs_;
  std::optional<nn::BiGru<S>> gru_;
  std::optional<nn::Dense<S>> out_;
};

}  // namespace pxfer::models
