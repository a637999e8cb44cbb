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

#include <cstdint>
#include <cstdio>
#include <string>

#include "pxfer/corpus/synthetic.hpp"
#include "pxfer/eval/metrics.hpp"
#include "pxfer/json_util.hpp"
#include "pxfer/models/config.hpp"
#include "pxfer/train/config.hpp"

namespace pxfer {

struct EvalConfig {
  eval::ProbeConfig probe;
  double silence_db = 20.0;  // frames below the mel floor + this many dB are ignored by the contour metric
};

// Every tunable of a run. Command-line flags override values from the file.
struct RunConfig {
  std::uint64_t seed = 1;
  corpus::SyntheticSpec synthetic;
  models::ClassifierConfig classifier;
  models::ModelConfig model;
  train::TrainConfig train_classifier = train::TrainConfig::defaults(train::Stage::kClassifier);
  train::TrainConfig train_initial = train::TrainConfig::defaults(train::Stage::kInitial);
  train::TrainConfig train_finetune = train::TrainConfig::defaults(train::Stage::kFinetune);
  EvalConfig eval;

  train::TrainConfig& stage(train::Stage s) {
    switch (s) {
      case train::Stage::kClassifier: return train_classifier;
      case train::Stage::kInitial: return train_initial;
      case train::Stage::kFinetune: return train_finetune;
    }
    throw InternalError("unknown stage");
  }
};

inline json to_json(const EvalConfig& e) {
  return json{{"silence_db", e.silence_db},
              {"probe",
               {{"test_fraction", e.probe.test_fraction},
                {"l2", e.probe.l2},
                {"lr", e.probe.lr},
                {"iterations", e.probe.iterations}}}};
}

inline json to_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"synthetic", corpus::to_json(c.synthetic)},
              {"classifier", models::to_json(c.classifier)},
              {"model", models::to_json(c.model)},
              {"train",
               {{"classifier", train::to_json(c.train_classifier)},
                {"initial", train::to_json(c.train_initial)},
                {"finetune", train::to_json(c.train_finetune)}}},
              {"eval", to_json(c.eval)}};
}

inline void from_json(const json& j, EvalConfig& e, const std::string& where) {
  StrictObject o(j, where);
  o.get("silence_db", e.silence_db);
  if (const json* p = o.sub("probe")) {
    StrictObject q(*p, where + ".probe");
    q.get("test_fraction", e.probe.test_fraction).get("l2", e.probe.l2).get("lr", e.probe.lr);
    q.get("iterations", e.probe.iterations);
    q.finish();
  }
  o.finish();
  if (!(e.probe.test_fraction > 0 && e.probe.test_fraction < 1) || e.probe.l2 < 0 || !(e.probe.lr > 0) ||
      e.probe.iterations < 1)
    throw InvalidConfig(where + ".probe: invalid probe settings");
}

// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  StrictObject o(j, "config");
  o.get("seed", c.seed);
  if (const json* s = o.sub("synthetic")) corpus::from_json(*s, c.synthetic, "config.synthetic");
  if (const json* s = o.sub("classifier")) models::from_json(*s, c.classifier, "config.classifier");
  if (const json* s = o.sub("model")) models::from_json(*s, c.model, "config.model");
  if (const json* t = o.sub("train")) {
    StrictObject ts(*t, "config.train");
    if (const json* s = ts.sub("classifier")) train::from_json(*s, c.train_classifier, "config.train.classifier");
    if (const json* s = ts.sub("initial")) train::from_json(*s, c.train_initial, "config.train.initial");
    if (const json* s = ts.sub("finetune")) train::from_json(*s, c.train_finetune, "config.train.finetune");
    ts.finish();
  }
  if (const json* s = o.sub("eval")) from_json(*s, c.eval, "config.eval");
  o.finish();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InvalidConfig(path.string() + ": not valid JSON");
  return run_config_from_json(j);
}

// FNV-1a 64 over the canonical (sorted-key) dump, as 16 hex digits.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pxfer
