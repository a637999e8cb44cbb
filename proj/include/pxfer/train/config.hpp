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
#include <cstdint>
#include <string>

#include "pxfer/errors.hpp"
#include "pxfer/json_util.hpp"
#include "pxfer/nn/adam.hpp"

namespace pxfer::train {

enum class Stage { kClassifier, kInitial, kFinetune };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kClassifier: return "classifier";
    case Stage::kInitial: return "initial";
    case Stage::kFinetune: return "finetune";
  }
  return "?";
}

struct TrainConfig {
  std::uint64_t steps = 2000;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::uint64_t anneal_steps = 0;  // 0: 20% of the stage-1 steps
  double lambda_adv = 0.1;          // weight of the adversarial generator loss
  std::size_t disc_windows = 4;     // discriminator windows per utterance and source
  double disc_lr = 0;               // 0: same as lr
  std::uint64_t log_interval = 10;
  std::uint64_t val_interval = 100;
  double clip_norm = 5.0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::string precision = "f32";

  static TrainConfig defaults(Stage s) {
    TrainConfig c;
    switch (s) {
      case Stage::kClassifier:
        c.steps = 500;
        c.val_interval = 25;
        break;
      case Stage::kInitial:
        break;
      case Stage::kFinetune:
        c.steps = 500;
        c.lr = 1e-4;
        break;
    }
    return c;
  }

  std::uint64_t effective_anneal_steps() const {
    return anneal_steps > 0 ? anneal_steps : std::max<std::uint64_t>(1, steps / 5);
  }

  nn::AdamConfig adam(double rate) const { return nn::AdamConfig{rate, beta1, beta2, eps, clip_norm}; }

  void validate() const {
    if (steps < 1) throw InvalidConfig("train.steps must be at least 1");
    if (batch_size < 1) throw InvalidConfig("train.batch_size must be at least 1");
    if (!(lr > 0) || disc_lr < 0) throw InvalidConfig("learning rates must be positive");
    if (lambda_adv < 0) throw InvalidConfig("train.lambda_adv must be non-negative");
    if (disc_windows < 1) throw InvalidConfig("train.disc_windows must be at least 1");
    if (log_interval < 1 || val_interval < 1) throw InvalidConfig("intervals must be at least 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0)) throw InvalidConfig("invalid Adam settings");
    if (precision != "f32") throw InvalidConfig("train.precision: only \"f32\" training is supported");
  }
};

inline json to_json(const TrainConfig& c) {
  return json{{"steps", c.steps},           {"batch_size", c.batch_size},     {"lr", c.lr},
              {"anneal_steps", c.anneal_steps}, {"lambda_adv", c.lambda_adv}, {"disc_windows", c.disc_windows},
              {"disc_lr", c.disc_lr},       {"log_interval", c.log_interval}, {"val_interval", c.val_interval},
              {"clip_norm", c.clip_norm},   {"beta1", c.beta1},               {"beta2", c.beta2},
              {"eps", c.eps},               {"precision", c.precision}};
}

inline void from_json(const json& j, TrainConfig& c, const std::string& where) {
  StrictObject o(j, where);
  o.get("steps", c.steps).get("batch_size", c.batch_size).get("lr", c.lr).get("anneal_steps", c.anneal_steps);
  o.get("lambda_adv", c.lambda_adv).get("disc_windows", c.disc_windows).get("disc_lr", c.disc_lr);
  o.get("log_interval", c.log_interval).get("val_interval", c.val_interval).get("clip_norm", c.clip_norm);
  o.get("beta1", c.beta1).get("beta2", c.beta2).get("eps", c.eps).get("precision", c.precision);
  o.finish();
}

// KL weight: rises linearly from 0 at step 0 to 1 at anneal_steps, then stays at 1.
inline double anneal_alpha(std::uint64_t step, std::uint64_t anneal_steps) {
  if (anneal_steps == 0) return 1.0;
  return std::min(1.0, double(step) / double(anneal_steps));
}

}  // namespace pxfer::train
