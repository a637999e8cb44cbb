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

#include "pxfer/features/phonemes.hpp"
#include "pxfer/models/config.hpp"
#include "pxfer/models/reference_encoder.hpp"
#include "pxfer/models/synthesis.hpp"

namespace pxfer::models {

template <typename S>
struct GeneratorOutput {
  nn::Var<S> x_hat;  // [T x M], normalized mel space
  ProsodyLatent<S> latent;
  nn::Var<S> y;
  nn::Var<S> reconstruction;  // mean absolute error per mel element
  nn::Var<S> kl;              // summed per-frame KL divided by T * M

  nn::Var<S> total(S alpha) const { return nn::add(reconstruction, nn::scale(kl, alpha)); }
};

// Phoneme encoder + reference encoder + parallel decoder sharing one
// parameter set.
template <typename S>
class Generator {
 public:
  Generator(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    nn::Rng rng(nn::mix_seed(seed, 0x6E4E));
    phon_.emplace(params_, cfg.phoneme_encoder, cfg.num_phonemes, cfg.leaky_slope, rng);
    const std::size_t y = cfg.phoneme_encoder.width();
    ref_.emplace(params_, cfg.encoder, cfg.n_mels, y, cfg.speaker_dim, cfg.leaky_slope, rng);
    dec_.emplace(params_, cfg.decoder, y, cfg.encoder.hidden, cfg.speaker_dim, cfg.n_mels, cfg.leaky_slope, rng);
  }

  Generator(Generator&&) noexcept = default;

  nn::Var<S> encode_phonemes(nn::Tape<S>& t, const features::PhonemeSequence& p, std::size_t frames) const {
    return (*phon_)(t, features::upsample_phonemes(p, frames).ids);
  }

  // x_ref: normalized reference mel [T x M]. Training uses e_enc == e_dec ==
  // the reference utterance's embedding; transfer swaps e_dec for the target
  // speaker's centroid.
  GeneratorOutput<S> forward(nn::Tape<S>& t, const nn::Array<S>& x_ref, const features::PhonemeSequence& phonemes,
                             const nn::Array<S>& e_enc, const nn::Array<S>& e_dec, EncodeMode mode,
                             const nn::Array<S>* noise = nullptr) const {
    GeneratorOutput<S> o;
    nn::Var<S> x = t.constant(x_ref);
    o.y = encode_phonemes(t, phonemes, x_ref.rows());
    o.latent = ref_->encode(t, x, o.y, t.constant(e_enc), mode, noise);
    o.x_hat = (*dec_)(t, o.y, o.latent.z_hat, t.constant(e_dec));
    o.reconstruction = nn::l1_loss(o.x_hat, x_ref);
    o.kl = nn::scale(nn::kl_diag_std_normal(o.latent.mean, o.latent.logvar), S(1) / S(x_ref.size()));
    return o;
  }

  // Standard normal draws for kSample mode.
  nn::Array<S> sample_noise(std::size_t T, nn::Rng& rng) const {
    return nn::normal_array<S>({T, cfg_.encoder.hidden}, 1.0, rng);
  }

  // Deterministic encoder output only.
  nn::Array<S> encode_latent(const nn::Array<S>& x, const features::PhonemeSequence& p,
                             const nn::Array<S>& e) const {
    nn::Tape<S> t;
    nn::Var<S> y = encode_phonemes(t, p, x.rows());
    return ref_->encode(t, t.constant(x), y, t.constant(e), EncodeMode::kDeterministic).z_hat.value();
  }

  // Decodes with a given latent.
  nn::Array<S> decode(const features::PhonemeSequence& p, const nn::Array<S>& z_hat, const nn::Array<S>& e) const {
    nn::Tape<S> t;
    nn::Var<S> y = encode_phonemes(t, p, z_hat.rows());
    return (*dec_)(t, y, t.constant(z_hat), t.constant(e)).value();
  }

  // Deterministic reconstruction or transfer, value only.
  nn::Array<S> infer(const nn::Array<S>& x_ref, const features::PhonemeSequence& p, const nn::Array<S>& e_enc,
                     const nn::Array<S>& e_dec) const {
    nn::Tape<S> t;
    return forward(t, x_ref, p, e_enc, e_dec, EncodeMode::kDeterministic).x_hat.value();
  }

  const PhonemeEncoder<S>& phoneme_encoder() const { return *phon_; }
  const ReferenceEncoder<S>& reference_encoder() const { return *ref_; }
  const Decoder<S>& decoder() const { return *dec_; }
  nn::ParameterSet<S>& params() { return params_; }
  const nn::ParameterSet<S>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  nn::ParameterSet<S> params_;
  std::optional<PhonemeEncoder<S>> phon_;
  std::optional<ReferenceEncoder<S>> ref_;
  std::optional<Decoder<S>> dec_;
};

}  // namespace pxfer::models
