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
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pxfer/errors.hpp"
#include "pxfer/features/mel.hpp"
#include "pxfer/features/phonemes.hpp"
#include "pxfer/features/wav.hpp"
#include "pxfer/io.hpp"
#include "pxfer/json_util.hpp"

namespace pxfer::corpus {

namespace fs = std::filesystem;
using features::MelSpectrogram;
using features::PhonemeSequence;

inline constexpr int kManifestVersion = 1;
inline constexpr int kPausePhoneme = 0;

enum class Split { kTrain, kVal, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

// Per-bin mel mean/std over the training split of the whole corpus.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  bool empty() const { return mean.empty(); }
  std::size_t bins() const { return mean.size(); }

  template <typename S>
  nn::Array<S> apply(const nn::Array<S>& mel) const {
    check(mel);
    nn::Array<S> out = mel;
    for (std::size_t t = 0; t < out.rows(); ++t)
      for (std::size_t m = 0; m < out.cols(); ++m) out.at(t, m) = S((double(out.at(t, m)) - mean[m]) / std[m]);
    return out;
  }

  template <typename S>
  nn::Array<S> invert(const nn::Array<S>& x) const {
    check(x);
    nn::Array<S> out = x;
    for (std::size_t t = 0; t < out.rows(); ++t)
      for (std::size_t m = 0; m < out.cols(); ++m) out.at(t, m) = S(double(out.at(t, m)) * std[m] + mean[m]);
    return out;
  }

  bool operator==(const NormStats&) const = default;

 private:
  template <typename S>
  void check(const nn::Array<S>& a) const {
    if (a.rank() != 2 || a.cols() != bins())
      throw InvalidInput("normalization stats have " + std::to_string(bins()) + " bins, mel is " +
                         nn::dims_str(a.dims));
  }
};

// Accumulates per-bin statistics in double precision.
class NormAccumulator {
 public:
  explicit NormAccumulator(std::size_t bins) : sum_(bins, 0.0), sq_(bins, 0.0) {}

  void add(const nn::Array<float>& mel) {
    if (mel.cols() != sum_.size()) throw InvalidInput("mel bin count mismatch in normalization");
    for (std::size_t t = 0; t < mel.rows(); ++t)
      for (std::size_t m = 0; m < mel.cols(); ++m) {
        const double v = mel.at(t, m);
        sum_[m] += v;
        sq_[m] += v * v;
      }
    frames_ += mel.rows();
  }

  NormStats finish() const {
    if (frames_ == 0) throw InvalidInput("no frames to compute normalization statistics from");
    NormStats s;
    for (std::size_t m = 0; m < sum_.size(); ++m) {
      const double mu = sum_[m] / double(frames_);
      const double var = std::max(sq_[m] / double(frames_) - mu * mu, 0.0);
      s.mean.push_back(mu);
      s.std.push_back(std::max(std::sqrt(var), 1e-5));
    }
    return s;
  }

 private:
  std::vector<double> sum_, sq_;
  std::size_t frames_ = 0;
};

struct UtteranceInfo {
  std::string id;
  int speaker = 0;
  std::size_t frames = 0;
  bool operator==(const UtteranceInfo&) const = default;
};

struct CorpusManifest {
  features::MelConfig mel;
  int num_phonemes = 0;
  std::map<int, std::string> speakers;
  std::vector<UtteranceInfo> train, val, test;
  NormStats norm;
  json generator;  // synthetic generation settings, null for ingested corpora

  const std::vector<UtteranceInfo>& split(Split s) const {
    return s == Split::kTrain ? train : s == Split::kVal ? val : test;
  }
  std::vector<UtteranceInfo>& split(Split s) { return s == Split::kTrain ? train : s == Split::kVal ? val : test; }

  // Speakers with at least one training utterance, ascending id.
  std::vector<int> train_speakers() const {
    std::set<int> ids;
    for (const auto& u : train) ids.insert(u.speaker);
    return {ids.begin(), ids.end()};
  }

  const std::string& speaker_name(int id) const {
    auto it = speakers.find(id);
    if (it == speakers.end()) throw InvalidInput("unknown speaker id " + std::to_string(id));
    return it->second;
  }
};

struct Utterance {
  std::string id;
  int speaker = 0;
  MelSpectrogram mel;
  PhonemeSequence phonemes;
  std::optional<std::vector<float>> prosody_truth;

  std::size_t frames() const { return mel.num_frames(); }
};

inline json to_json(const NormStats& n) { return json{{"mean", n.mean}, {"std", n.std}}; }

inline json to_json(const CorpusManifest& m) {
  json j;
  j["format"] = "pxfer-corpus";
  j["version"] = kManifestVersion;
  j["mel"] = pxfer::to_json(m.mel);
  j["num_phonemes"] = m.num_phonemes;
  j["speakers"] = json::array();
  for (const auto& [id, name] : m.speakers) j["speakers"].push_back({{"id", id}, {"name", name}});
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    json list = json::array();
    for (const auto& u : m.split(s)) list.push_back({{"id", u.id}, {"speaker", u.speaker}, {"frames", u.frames}});
    j["splits"][split_name(s)] = list;
  }
  j["norm"] = to_json(m.norm);
  j["generator"] = m.generator;
  return j;
}

inline CorpusManifest manifest_from_json(const json& j, const std::string& what) {
  CorpusManifest m;
  try {
    if (j.value("format", "") != "pxfer-corpus") throw FormatError(what + ": not a corpus manifest");
    if (j.at("version").get<int>() != kManifestVersion)
      throw FormatError(what + ": unsupported manifest version " + j.at("version").dump());
    from_json(j.at("mel"), m.mel, what + ".mel");
    m.num_phonemes = j.at("num_phonemes").get<int>();
    for (const auto& s : j.at("speakers")) {
      const int id = s.at("id").get<int>();
      if (!m.speakers.emplace(id, s.at("name").get<std::string>()).second)
        throw FormatError(what + ": duplicate speaker id " + std::to_string(id));
    }
    for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
      for (const auto& u : j.at("splits").at(split_name(s)))
        m.split(s).push_back({u.at("id").get<std::string>(), u.at("speaker").get<int>(), u.at("frames").get<std::size_t>()});
    m.norm.mean = j.at("norm").at("mean").get<std::vector<double>>();
    m.norm.std = j.at("norm").at("std").get<std::vector<double>>();
    if (j.contains("generator")) m.generator = j.at("generator");
  } catch (const json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
  return m;
}

inline void validate(const CorpusManifest& m, const std::string& what) {
  if (m.num_phonemes < 1) throw FormatError(what + ": num_phonemes must be positive");
  if (m.train.empty() && m.val.empty() && m.test.empty()) throw FormatError(what + ": manifest lists no utterances");
  std::set<std::string> seen;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
    for (const auto& u : m.split(s)) {
      if (!m.speakers.count(u.speaker))
        throw FormatError(what + ": utterance " + u.id + " has unknown speaker " + std::to_string(u.speaker));
      if (!seen.insert(u.id).second) throw FormatError(what + ": utterance " + u.id + " listed twice");
      if (u.frames == 0) throw FormatError(what + ": utterance " + u.id + " has no frames");
    }
  if (!m.train.empty() && (m.norm.bins() != std::size_t(m.mel.n_mels) || m.norm.std.size() != m.norm.bins()))
    throw FormatError(what + ": normalization stats do not match n_mels");
  for (double s : m.norm.std)
    if (!(s > 0) || !std::isfinite(s)) throw FormatError(what + ": non-positive normalization std");
}

// A corpus directory: root/manifest.json plus root/<speaker>/<utt>.{mel,phn,dur,truth}.
class Corpus {
 public:
  explicit Corpus(fs::path root) : root_(std::move(root)) {
    const fs::path mpath = root_ / "manifest.json";
    if (!fs::exists(mpath)) throw IoError("corpus manifest not found: " + mpath.string());
    json j;
    try {
      j = json::parse(io::read_text(mpath));
    } catch (const json::parse_error& e) {
      throw FormatError(mpath.string() + ": " + e.what());
    }
    manifest_ = manifest_from_json(j, mpath.string());
    validate(manifest_, mpath.string());
  }

  const CorpusManifest& manifest() const { return manifest_; }
  const fs::path& root() const { return root_; }

  fs::path stem(const UtteranceInfo& u) const { return root_ / manifest_.speaker_name(u.speaker) / u.id; }

  Utterance load(const UtteranceInfo& u) const {
    const fs::path base = stem(u);
    Utterance out;
    out.id = u.id;
    out.speaker = u.speaker;
    out.mel = features::read_mel(base.string() + ".mel");
    const std::size_t T = out.mel.num_frames();
    if (out.mel.num_bins() != std::size_t(manifest_.mel.n_mels))
      throw FormatError(base.string() + ".mel: " + std::to_string(out.mel.num_bins()) + " bins, manifest says " +
                        std::to_string(manifest_.mel.n_mels));
    if (T != u.frames)
      throw FormatError(base.string() + ".mel: " + std::to_string(T) + " frames, manifest says " +
                        std::to_string(u.frames));
    const auto ids = features::parse_phonemes(io::read_text(base.string() + ".phn"), base.string() + ".phn");
    out.phonemes = features::read_durations(base.string() + ".dur");
    if (ids != out.phonemes.ids) throw FormatError(base.string() + ": .phn and .dur disagree on phoneme ids");
    features::validate(out.phonemes, manifest_.num_phonemes);
    if (out.phonemes.total_frames() != T)
      throw AlignmentError(base.string() + ": durations sum to " + std::to_string(out.phonemes.total_frames()) +
                           " frames but the mel has " + std::to_string(T));
    const fs::path truth = base.string() + ".truth";
    if (fs::exists(truth)) {
      auto c = features::read_mel(truth);
      if (c.num_frames() != T || c.num_bins() != 1)
        throw FormatError(truth.string() + ": contour shape " + nn::dims_str(c.frames.dims) + " does not match");
      out.prosody_truth = c.frames.data;
    }
    return out;
  }

  std::vector<Utterance> load_split(Split s) const {
    std::vector<Utterance> out;
    for (const auto& u : manifest_.split(s)) out.push_back(load(u));
    return out;
  }

  // Normalized T x M input features for the networks.
  nn::Array<float> normalized(const Utterance& u) const { return manifest_.norm.apply(u.mel.frames); }

 private:
  fs::path root_;
  CorpusManifest manifest_;
};

inline Corpus load_corpus(const fs::path& root) { return Corpus(root); }

// Writes utterances into a corpus directory, then the manifest with
// normalization statistics from the training split.
class CorpusBuilder {
 public:
  CorpusBuilder(fs::path root, features::MelConfig mel, int num_phonemes) : root_(std::move(root)) {
    mel.validate();
    if (num_phonemes < 1) throw InvalidConfig("num_phonemes must be positive");
    manifest_.mel = mel;
    manifest_.num_phonemes = num_phonemes;
  }

  void add_speaker(int id, const std::string& name) {
    if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..")
      throw InvalidInput("invalid speaker name '" + name + "'");
    for (const auto& [_, n] : manifest_.speakers)
      if (n == name) throw InvalidInput("duplicate speaker name '" + name + "'");
    if (!manifest_.speakers.emplace(id, name).second)
      throw InvalidInput("duplicate speaker id " + std::to_string(id));
  }

  void add(const Utterance& u, Split split) {
    if (!manifest_.speakers.count(u.speaker)) throw InvalidInput("utterance " + u.id + " has unknown speaker");
    if (u.id.empty() || u.id.find('/') != std::string::npos) throw InvalidInput("invalid utterance id '" + u.id + "'");
    if (!ids_.insert(u.id).second) throw InvalidInput("duplicate utterance id " + u.id);
    if (u.mel.num_bins() != std::size_t(manifest_.mel.n_mels))
      throw InvalidInput("utterance " + u.id + " has " + std::to_string(u.mel.num_bins()) + " mel bins");
    features::validate(u.phonemes, manifest_.num_phonemes);
    features::upsample_phonemes(u.phonemes, u.frames());
    const fs::path base = root_ / manifest_.speakers.at(u.speaker) / u.id;
    features::write_mel(base.string() + ".mel", u.mel);
    io::write_text(base.string() + ".phn", features::format_phonemes(u.phonemes.ids));
    features::write_durations(base.string() + ".dur", u.phonemes);
    if (u.prosody_truth) {
      if (u.prosody_truth->size() != u.frames()) throw InvalidInput("utterance " + u.id + ": contour length mismatch");
      MelSpectrogram c;
      c.frames = nn::Array<float>({u.frames(), 1}, *u.prosody_truth);
      c.sample_rate = u.mel.sample_rate;
      c.hop = u.mel.hop;
      features::write_mel(base.string() + ".truth", c);
    }
    if (split == Split::kTrain) {
      if (!acc_) acc_.emplace(std::size_t(manifest_.mel.n_mels));
      acc_->add(u.mel.frames);
    }
    manifest_.split(split).push_back({u.id, u.speaker, u.frames()});
  }

  // Computes the mel of a waveform and adds it with its alignment.
  void add_audio(const std::string& utt_id, int speaker, const features::Wav& wav, const PhonemeSequence& phonemes,
                 Split split) {
    if (wav.sample_rate != manifest_.mel.sample_rate)
      throw InvalidInput(utt_id + ": sample rate " + std::to_string(wav.sample_rate) + " differs from " +
                         std::to_string(manifest_.mel.sample_rate));
    Utterance u;
    u.id = utt_id;
    u.speaker = speaker;
    u.mel = features::compute_mel(std::span<const double>(wav.samples), manifest_.mel);
    u.phonemes = phonemes;
    add(u, split);
  }

  void set_generator(json g) { manifest_.generator = std::move(g); }

  CorpusManifest finish() {
    if (acc_) manifest_.norm = acc_->finish();
    validate(manifest_, (root_ / "manifest.json").string());
    io::write_text(root_ / "manifest.json", to_json(manifest_).dump(1) + "\n");
    return manifest_;
  }

 private:
  fs::path root_;
  CorpusManifest manifest_;
  std::set<std::string> ids_;
  std::optional<NormAccumulator> acc_;
};

}  // namespace pxfer::corpus
