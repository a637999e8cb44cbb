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

// Small model configurations shared by the test suites.

#pragma once

#include "pxfer/models/config.hpp"

namespace pxfer::testing {

inline models::ClassifierConfig tiny_classifier_config() {
  models::ClassifierConfig c;
  c.channels = {2, 3};
  c.gru = 3;
  c.bottleneck = 2;
  c.min_frames = 4;
  return c;
}

inline models::DiscriminatorConfig tiny_discriminator_config() {
  models::DiscriminatorConfig c;
  c.channels = {2, 4, 4};
  c.attention_after = 2;
  c.attention_ratio = 2;
  c.window = 6;
  return c;
}

inline models::ModelConfig tiny_model_config() {
  models::ModelConfig c;
  c.n_mels = 5;
  c.num_phonemes = 6;
  c.speaker_dim = 2;
  c.phoneme_encoder.embed = 3;
  c.phoneme_encoder.channels = {3};
  c.phoneme_encoder.kernel = 3;
  c.phoneme_encoder.gru_per_dir = 2;
  c.encoder.hidden = 4;
  c.encoder.tau = 3;
  c.encoder.channels = {3, 3};
  c.encoder.kernel = 3;
  c.decoder.channels = {4};
  c.decoder.kernel = 3;
  c.decoder.gru_per_dir = 3;
  c.discriminator = tiny_discriminator_config();
  return c;
}

}  // namespace pxfer::testing
