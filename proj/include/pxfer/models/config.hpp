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
#include <string>
#include <vector>

#include "pxfer/errors.hpp"
#include "pxfer/json_util.hpp"

namespace pxfer::models {

inline void require_positive(const std::vector<std::size_t>& v, const std::string& what) {
  if (v.empty()) throw InvalidConfig(what + " must not be empty");
  for (auto c : v)
    if (c == 0) throw InvalidConfig(what + " entries must be positive");
}

struct ClassifierConfig {
  std::vector<std::size_t> channels{32, 32, 64, 64};  // 3x3 kernels, stride 2 on both axes
  std::size_t gru = 128;
  std::size_t bottleneck = 64;
  std::size_t min_frames = 16;  // shorter inputs are reflect-padded to this length

  void validate() const {
    require_positive(channels, "classifier.channels");
    if (gru == 0 || bottleneck == 0 || min_frames == 0) throw InvalidConfig("classifier sizes must be positive");
  }
};

struct PhonemeEncoderConfig {
  std::size_t embed = 128;
  std::vector<std::size_t> channels{128, 128, 128};
  std::size_t kernel = 5;
  std::size_t gru_per_dir = 64;

  std::size_t width() const { return 2 * gru_per_dir; }
  void validate() const {
    require_positive(channels, "phoneme_encoder.channels");
    if (embed == 0 || gru_per_dir == 0) throw InvalidConfig("phoneme encoder sizes must be positive");
    if (kernel % 2 == 0) throw InvalidConfig("phoneme_encoder.kernel must be odd");
  }
};

struct EncoderConfig {
  std::size_t hidden = 64;  // H, split into forward/backward halves
  std::size_t tau = 8;
  std::vector<std::size_t> channels{128, 128, 128};
  std::size_t kernel = 5;

  void validate() const {
    require_positive(channels, "encoder.channels");
    if (hidden == 0 || hidden % 2) throw InvalidConfig("encoder.hidden must be a positive even number");
    if (tau < 1) throw InvalidConfig("encoder.tau must be at least 1");
    if (kernel % 2 == 0) throw InvalidConfig("encoder.kernel must be odd");
  }
};

struct DecoderConfig {
  std::vector<std::size_t> channels{256, 256, 256};
  std::size_t kernel = 5;
  std::size_t gru_per_dir = 128;

  void validate() const {
    require_positive(channels, "decoder.channels");
    if (gru_per_dir == 0) throw InvalidConfig("decoder.gru_per_dir must be positive");
    if (kernel % 2 == 0) throw InvalidConfig("decoder.kernel must be odd");
  }
};

struct DiscriminatorConfig {
  std::vector<std::size_t> channels{32, 64, 128, 128};
  std::size_t attention_after = 3;   // 1-based conv layer index
  std::size_t attention_ratio = 8;   // query/key width = channels / ratio
  std::size_t window = 32;

  void validate() const {
    require_positive(channels, "discriminator.channels");
    if (attention_after < 1 || attention_after > channels.size())
      throw InvalidConfig("discriminator.attention_after out of range");
    if (attention_ratio == 0 || channels[attention_after - 1] < attention_ratio)
      throw InvalidConfig("discriminator.attention_ratio too large");
    if (window == 0) throw InvalidConfig("discriminator.window must be positive");
  }
};

// Everything needed to rebuild a generator/discriminator pair.
struct ModelConfig {
  // 0 means "take from the corpus / classifier".
  std::size_t n_mels = 0;
  std::size_t num_phonemes = 0;
  std::size_t speaker_dim = 0;
  double leaky_slope = 0.2;
  PhonemeEncoderConfig phoneme_encoder;
  EncoderConfig encoder;
  DecoderConfig decoder;
  DiscriminatorConfig discriminator;

  void validate() const {
    if (n_mels == 0 || num_phonemes == 0 || speaker_dim == 0) throw InvalidConfig("model sizes must be positive");
    if (!(leaky_slope >= 0 && leaky_slope < 1)) throw InvalidConfig("leaky_slope must be in [0, 1)");
    phoneme_encoder.validate();
    encoder.validate();
    decoder.validate();
    discriminator.validate();
  }
};

inline json to_json(const ClassifierConfig& c) {
  return json{{"channels", c.channels}, {"gru", c.gru}, {"bottleneck", c.bottleneck}, {"min_frames", c.min_frames}};
}
inline void from_json(const json& j, ClassifierConfig& c, const std::string& where) {
  StrictObject o(j, where);
  o.get("channels", c.channels).get("gru", c.gru).get("bottleneck", c.bottleneck).get("min_frames", c.min_frames);
  o.finish();
  c.validate();
}

inline json to_json(const PhonemeEncoderConfig& c) {
  return json{{"embed", c.embed}, {"channels", c.channels}, {"kernel", c.kernel}, {"gru_per_dir", c.gru_per_dir}};
}
inline void from_json(const json& j, PhonemeEncoderConfig& c, const std::string& where) {
  StrictObject o(j, where);
  o.get("embed", c.embed).get("channels", c.channels).get("kernel", c.kernel).get("gru_per_dir", c.gru_per_dir);
  o.finish();
}

inline json to_json(const EncoderConfig& c) {
  return json{{"hidden", c.hidden}, {"tau", c.tau}, {"channels", c.channels}, {"kernel", c.kernel}};
}
inline void from_json(const json& j, EncoderConfig& c, const std::string& where) {
  StrictObject o(j, where);
  o.get("hidden", c.hidden).get("tau", c.tau).get("channels", c.channels).get("kernel", c.kernel);
  o.finish();
}

inline json to_json(const DecoderConfig& c) {
  return json{{"channels", c.channels}, {"kernel", c.kernel}, {"gru_per_dir", c.gru_per_dir}};
}
inline void from_json(const json& j, DecoderConfig& c, const std::string& where) {
  StrictObject o(j, where);
  o.get("channels", c.channels).get("kernel", c.kernel).get("gru_per_dir", c.gru_per_dir);
  o.finish();
}

inline json to_json(const DiscriminatorConfig& c) {
  return json{{"channels", c.channels},
              {"attention_after", c.attention_after},
              {"attention_ratio", c.attention_ratio},
              {"window", c.window}};
}
inline void from_json(const json& j, DiscriminatorConfig& c, const std::string& where) {
  StrictObject o(j, where);
  o.get("channels", c.channels)
      .get("attention_after", c.attention_after)
      .get("attention_ratio", c.attention_ratio)
      .get("window", c.window);
  o.finish();
}

inline json to_json(const ModelConfig& c) {
  return json{{"n_mels", c.n_mels},
              {"num_phonemes", c.num_phonemes},
              {"speaker_dim", c.speaker_dim},
              {"leaky_slope", c.leaky_slope},
              {"phoneme_encoder", to_json(c.phoneme_encoder)},
              {"encoder", to_json(c.encoder)},
              {"decoder", to_json(c.decoder)},
              {"discriminator", to_json(c.discriminator)}};
}
// Sizes taken from the corpus/classifier (n_mels, num_phonemes, speaker_dim) may be absent.
inline void from_json(const json& j, ModelConfig& c, const std::string& where) {
  StrictObject o(j, where);
  o.get("n_mels", c.n_mels).get("num_phonemes", c.num_phonemes).get("speaker_dim", c.speaker_dim);
  o.get("leaky_slope", c.leaky_slope);
  if (auto* s = o.sub("phoneme_encoder")) from_json(*s, c.phoneme_encoder, where + ".phoneme_encoder");
  if (auto* s = o.sub("encoder")) from_json(*s, c.encoder, where + ".encoder");
  if (auto* s = o.sub("decoder")) from_json(*s, c.decoder, where + ".decoder");
  if (auto* s = o.sub("discriminator")) from_json(*s, c.discriminator, where + ".discriminator");
  o.finish();
}

}  // namespace pxfer::models
