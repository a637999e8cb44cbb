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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pxfer/corpus/corpus.hpp"
#include "pxfer/models/discriminator.hpp"
#include "pxfer/models/generator.hpp"
#include "pxfer/models/speaker_classifier.hpp"
#include "pxfer/train/checkpoint.hpp"

namespace pxfer::train {

inline void store_norm(Checkpoint& c, const corpus::NormStats& n) {
  c.put("norm.mean", nn::Array<double>({n.mean.size()}, n.mean));
  c.put("norm.std", nn::Array<double>({n.std.size()}, n.std));
}

inline corpus::NormStats load_norm(const Checkpoint& c) {
  corpus::NormStats n;
  n.mean = c.f64("norm.mean").data;
  n.std = c.f64("norm.std").data;
  if (n.mean.size() != n.std.size()) throw FormatError("checkpoint normalization stats are inconsistent");
  return n;
}

inline json names_json(const std::map<int, std::string>& names) {
  json j = json::object();
  for (const auto& [id, n] : names) j[std::to_string(id)] = n;
  return j;
}

inline std::map<int, std::string> names_from_json(const json& j) {
  std::map<int, std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it) out[std::stoi(it.key())] = it.value().get<std::string>();
  return out;
}

// A trained speaker classifier with its class-to-speaker mapping and the
// corpus normalization it was trained under.
struct ClassifierBundle {
  models::SpeakerClassifier<float> model;
  std::vector<int> speakers;  // class index -> speaker id
  std::map<int, std::string> names;
  corpus::NormStats norm;

  nn::Array<float> embed(const nn::Array<float>& x_norm) const { return model.embed(x_norm); }

  int predict(const nn::Array<float>& x_norm) const {
    const auto p = model.probabilities(x_norm);
    return speakers[std::size_t(std::max_element(p.begin(), p.end()) - p.begin())];
  }

  json describe() const {
    return json{{"config", models::to_json(model.config())},
                {"n_mels", model.n_mels()},
                {"speakers", speakers},
                {"speaker_names", names_json(names)}};
  }
};

inline void store_classifier(Checkpoint& c, const ClassifierBundle& b) {
  store_params(c, b.model.params());
  store_norm(c, b.norm);
}

// `desc` is the object written by ClassifierBundle::describe().
inline ClassifierBundle load_classifier(const Checkpoint& c, const json& desc) {
  models::ClassifierConfig cfg;
  try {
    models::from_json(desc.at("config"), cfg, "classifier.config");
    auto speakers = desc.at("speakers").get<std::vector<int>>();
    models::SpeakerClassifier<float> m(cfg, desc.at("n_mels").get<std::size_t>(), speakers.size(), 0);
    restore_params(c, m.params(), {"cls."});
    return ClassifierBundle{std::move(m), std::move(speakers), names_from_json(desc.at("speaker_names")), load_norm(c)};
  } catch (const json::exception& e) {
    throw FormatError(std::string("classifier metadata: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw FormatError(std::string("classifier metadata: ") + e.what());
  }
}

inline std::string checkpoint_kind(const Checkpoint& c) {
  try {
    return c.meta().at("kind").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
}

inline ClassifierBundle load_classifier_checkpoint(const Checkpoint& c) {
  const std::string kind = checkpoint_kind(c);
  if (kind != "classifier") throw FormatError("checkpoint holds a " + kind + " model, expected a classifier");
  return load_classifier(c, c.meta().at("classifier"));
}

// Generator (and optional discriminator) with the frozen classifier and the
// target-speaker centroids used at inference.
// Deep copy through the checkpoint encoding.
inline ClassifierBundle clone_classifier(const ClassifierBundle& b) {
  Checkpoint c;
  store_classifier(c, b);
  return load_classifier(c, b.describe());
}

struct GeneratorBundle {
  ClassifierBundle classifier;
  models::Generator<float> gen;
  std::optional<models::Discriminator<float>> disc;
  std::map<int, nn::Array<float>> centroids;
  json meta;

  const corpus::NormStats& norm() const { return classifier.norm; }

  const nn::Array<float>& centroid(int speaker) const {
    auto it = centroids.find(speaker);
    if (it == centroids.end())
      throw InvalidInput("speaker " + std::to_string(speaker) + " has no centroid (not a training speaker)");
    return it->second;
  }

  // Normalized-space output for source `x_norm` rendered as `target`.
  nn::Array<float> transfer(const nn::Array<float>& x_norm, const features::PhonemeSequence& p, int target) const {
    return gen.infer(x_norm, p, classifier.embed(x_norm), centroid(target));
  }
};

inline void store_centroids(Checkpoint& c, const std::map<int, nn::Array<float>>& cs) {
  for (const auto& [id, e] : cs) c.put("centroid/" + std::to_string(id), e);
}

inline void store_generator(Checkpoint& c, const json& meta, const models::Generator<float>& gen,
                            const models::Discriminator<float>* disc, const ClassifierBundle& cls,
                            const std::map<int, nn::Array<float>>& centroids) {
  c.set_meta(meta);
  store_params(c, gen.params());
  if (disc) store_params(c, disc->params());
  store_classifier(c, cls);
  store_centroids(c, centroids);
}

inline void store_generator(Checkpoint& c, const GeneratorBundle& b) {
  store_generator(c, b.meta, b.gen, b.disc ? &*b.disc : nullptr, b.classifier, b.centroids);
}

inline GeneratorBundle load_generator_checkpoint(const Checkpoint& c) {
  const std::string kind = checkpoint_kind(c);
  if (kind != "generator") throw FormatError("checkpoint holds a " + kind + " model, expected a generator");
  const json meta = c.meta();
  try {
    auto cls = load_classifier(c, meta.at("classifier"));
    models::ModelConfig mc;
    models::from_json(meta.at("model"), mc, "model");
    models::Generator<float> gen(mc, 0);
    restore_params(c, gen.params(), {"phon.", "ref.", "dec."});
    std::optional<models::Discriminator<float>> disc;
    if (meta.at("stage").get<std::string>() == "finetune") {
      disc.emplace(mc.discriminator, mc.n_mels, mc.leaky_slope, 0);
      restore_params(c, disc->params(), {"disc."});
    }
    std::map<int, nn::Array<float>> cs;
    for (int id : meta.at("speakers").get<std::vector<int>>()) cs[id] = c.f32("centroid/" + std::to_string(id));
    return GeneratorBundle{std::move(cls), std::move(gen), std::move(disc), std::move(cs), meta};
  } catch (const json::exception& e) {
    throw FormatError(std::string("generator metadata: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw FormatError(std::string("generator metadata: ") + e.what());
  }
}

inline GeneratorBundle clone_generator(const GeneratorBundle& b) {
  Checkpoint c;
  store_generator(c, b);
  return load_generator_checkpoint(c);
}

}  // namespace pxfer::train
