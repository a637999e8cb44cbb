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
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pxfer/models/common.hpp"
#include "pxfer/models/config.hpp"

namespace pxfer::models {

enum class EncodeMode { kSample, kDeterministic };

struct BottleneckIndices {
  std::vector<std::size_t> forward;   // picked rows of the forward half, one per block
  std::vector<std::size_t> backward;  // picked rows of the backward half, one per block
};

// Block k covers frames [k*tau, (k+1)*tau). The forward half keeps the last
// frame of each block (clamped to T-1 for a partial tail block), the backward
// half keeps the first.
inline BottleneckIndices bottleneck_indices(std::size_t T, std::size_t tau) {
  if (tau < 1) throw InvalidConfig("temporal bottleneck rate must be at least 1");
  BottleneckIndices b;
  const std::size_t blocks = (T + tau - 1) / tau;
  for (std::size_t k = 0; k < blocks; ++k) {
    b.forward.push_back(std::min(k * tau + tau - 1, T - 1));
    b.backward.push_back(k * tau);
  }
  return b;
}

// Downsamples z [T x H] to one row per block and replicates each block row
// tau times, truncated to T.
template <typename S>
nn::Var<S> temporal_bottleneck(nn::Var<S> z, std::size_t tau) {
  const auto& Z = z.value();
  if (Z.rank() != 2) throw InvalidInput("temporal bottleneck expects a [T x H] input");
  const std::size_t T = Z.rows(), H = Z.cols();
  if (H % 2) throw InvalidConfig("temporal bottleneck needs an even latent width, got " + std::to_string(H));
  const auto b = bottleneck_indices(T, tau);
  std::vector<std::size_t> fi(T), bi(T);
  for (std::size_t t = 0; t < T; ++t) {
    fi[t] = b.forward[t / tau];
    bi[t] = b.backward[t / tau];
  }
  nn::Var<S> zf = nn::gather_rows(nn::slice_cols(z, 0, H / 2), std::move(fi));
  nn::Var<S> zb = nn::gather_rows(nn::slice_cols(z, H / 2, H), std::move(bi));
  return nn::concat_cols<S>({zf, zb});
}

template <typename S>
struct ProsodyLatent {
  nn::Var<S> z_in;    // [T x H] bi-GRU states, [forward | backward]
  nn::Var<S> mean;    // [T x H]
  nn::Var<S> logvar;  // [T x H]
  nn::Var<S> z;       // [T x H]
  nn::Var<S> z_hat;   // [T x H]
};

// Instance-normalized conv stack over time, bi-GRU conditioned on phonemes and
// speaker embedding, diagonal Gaussian posterior, temporal bottleneck.
template <typename S>
class ReferenceEncoder {
 public:
  ReferenceEncoder(nn::ParameterSet<S>& ps, const EncoderConfig& cfg, std::size_t n_mels, std::size_t y_width,
                   std::size_t e_width, double slope, nn::Rng& rng)
      : cfg_(cfg), slope_(slope), n_mels_(n_mels), y_width_(y_width), e_width_(e_width) {
    cfg.validate();
    std::size_t cin = n_mels;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      convs_.emplace_back(ps, "ref.conv" + std::to_string(i), cin, cfg.channels[i], cfg.kernel, rng);
      cin = cfg.channels[i];
    }
    const std::size_t half = cfg.hidden / 2;
    gru_.emplace(ps, "ref.gru", cin + y_width + e_width, half, rng);
    // The speaker-embedding rows of the input weights start at zero.
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& p = ps[i];
      if (p.name != "ref.gru.fwd.wx" && p.name != "ref.gru.bwd.wx") continue;
      const std::size_t cols = p.value.dims[1];
      for (std::size_t r = cin + y_width; r < cin + y_width + e_width; ++r)
        for (std::size_t c = 0; c < cols; ++c) p.value.at(r, c) = S(0);
    }
    // Separate heads per direction keep the forward/backward halves of z
    // aligned with the halves of z_in that the bottleneck picks from.
    mean_f_.emplace(ps, "ref.mean_fwd", half, half, rng);
    mean_b_.emplace(ps, "ref.mean_bwd", half, half, rng);
    logvar_f_.emplace(ps, "ref.logvar_fwd", half, half, rng);
    logvar_b_.emplace(ps, "ref.logvar_bwd", half, half, rng);
  }

  // Post-instance-norm activations of the conv stack, [T x C].
  nn::Var<S> conv_features(nn::Tape<S>& t, nn::Var<S> x) const {
    require_frames(x, n_mels_, "reference encoder input");
    // Replicate padding: a constant per-bin offset reaches every tap, so it
    // stays a per-channel constant that the instance norm removes.
    const auto spec = nn::Conv1dSpec::same(cfg_.kernel, nn::PadMode::kReplicate);
    for (const auto& c : convs_) x = leaky(nn::instance_norm_time(c(t, x, spec)), slope_);
    return x;
  }

  nn::Var<S> encode_z_in(nn::Tape<S>& t, nn::Var<S> x, nn::Var<S> y, nn::Var<S> e) const {
    require_frames(x, n_mels_, "reference encoder input");
    require_frames(y, y_width_, "reference encoder phoneme encodings");
    if (e.value().size() != e_width_) throw InvalidInput("reference encoder: speaker embedding width mismatch");
    const std::size_t T = x.value().rows();
    if (y.value().rows() != T)
      throw AlignmentError("reference encoder: mel has " + std::to_string(T) + " frames, phoneme encodings " +
                           std::to_string(y.value().rows()));
    nn::Var<S> h = conv_features(t, x);
    return (*gru_)(t, nn::concat_cols<S>({h, y, nn::tile_rows(e, T)}));
  }

  // noise: standard normal draws [T x H], required in kSample mode.
  ProsodyLatent<S> encode(nn::Tape<S>& t, nn::Var<S> x, nn::Var<S> y, nn::Var<S> e, EncodeMode mode,
                          const nn::Array<S>* noise = nullptr) const {
    ProsodyLatent<S> L;
    L.z_in = encode_z_in(t, x, y, e);
    const std::size_t H = cfg_.hidden, half = H / 2;
    nn::Var<S> zf = nn::slice_cols(L.z_in, 0, half), zb = nn::slice_cols(L.z_in, half, H);
    L.mean = nn::concat_cols<S>({(*mean_f_)(t, zf), (*mean_b_)(t, zb)});
    L.logvar = nn::concat_cols<S>({(*logvar_f_)(t, zf), (*logvar_b_)(t, zb)});
    if (mode == EncodeMode::kDeterministic) {
      L.z = L.mean;
    } else {
      if (!noise || noise->dims != L.mean.value().dims)
        throw InvalidInput("reference encoder: sampling needs a [T x H] noise array");
      nn::Var<S> sd = nn::exp(nn::scale(L.logvar, S(0.5)));
      L.z = nn::add(L.mean, nn::mul(sd, t.constant(*noise)));
    }
    L.z_hat = temporal_bottleneck(L.z, cfg_.tau);
    return L;
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  double slope_;
  std::size_t n_mels_, y_width_, e_width_;
  std::vector<nn::Conv1d<S>> convs_;
  std::optional<nn::BiGru<S>> gru_;
  std::optional<nn::Dense<S>> mean_f_, mean_b_, logvar_f_, logvar_b_;
};

}  // namespace pxfer::models
