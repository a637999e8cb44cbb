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

// pxfer command-line front end.
//
// Exit codes: 0 ok, 1 training or internal failure, 2 usage or invalid
// config, 3 file or format error, 4 missing or incompatible prior stage.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "pxfer/corpus/synthetic.hpp"
#include "pxfer/eval/metrics.hpp"
#include "pxfer/run_config.hpp"
#include "pxfer/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace pxfer;

namespace {

constexpr int kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitIo = 3, kExitState = 4;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

RunConfig effective_config(const Common& c) {
  RunConfig rc = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed) rc.seed = *c.seed;
  return rc;
}

// Writes config.json (effective config + hash + command) into `dir`.
json echo_config(const fs::path& dir, const RunConfig& rc, const std::string& command, json extra = json::object()) {
  json j = to_json(rc);
  const std::string hash = config_hash(j);
  json out{{"command", command}, {"config", j}, {"config_hash", hash}};
  for (auto it = extra.begin(); it != extra.end(); ++it) out[it.key()] = it.value();
  fs::create_directories(dir);
  io::write_text(dir / "config.json", out.dump(2) + "\n");
  return out;
}

void require_stage(const fs::path& path, const std::string& what, const std::string& command) {
  if (!fs::exists(path))
    throw StateError("missing " + what + ": " + path.string() + " not found (run `pxfer " + command + "` first)");
}

train::Checkpoint load_stage(const fs::path& path, const std::string& what, const std::string& command) {
  require_stage(path, what, command);
  return train::Checkpoint::load(path);
}

train::GeneratorBundle load_model(const fs::path& path) {
  const auto ck = load_stage(path, "generator checkpoint", "train");
  const std::string kind = train::checkpoint_kind(ck);
  if (kind != "generator") throw StateError(path.string() + " holds a " + kind + " model, not a trained generator");
  auto b = train::load_generator_checkpoint(ck);
  if (b.meta.value("step", std::uint64_t(0)) == 0) throw StateError(path.string() + " is an untrained generator");
  return b;
}

train::ClassifierBundle load_classifier_file(const fs::path& path) {
  const auto ck = load_stage(path, "classifier checkpoint", "train-classifier");
  if (train::checkpoint_kind(ck) != "classifier")
    throw StateError(path.string() + " is not a speaker classifier checkpoint");
  return train::load_classifier_checkpoint(ck);
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

train::RunOptions run_options(const fs::path& out, bool resume) {
  train::RunOptions o;
  o.out_dir = out;
  o.resume = resume;
  o.on_log = [](const json& j) { std::cerr << j.dump() << "\n"; };
  return o;
}

// Speaker by manifest name ("spk01") or numeric id.
int resolve_speaker(const std::string& s, const std::map<int, std::string>& names) {
  for (const auto& [id, n] : names)
    if (n == s) return id;
  try {
    std::size_t used = 0;
    const int id = std::stoi(s, &used);
    if (used == s.size() && names.count(id)) return id;
  } catch (const std::exception&) {
  }
  throw InvalidInput("unknown speaker '" + s + "'");
}

struct Source {
  corpus::Utterance utt;
  std::optional<corpus::CorpusManifest> manifest;
};

// A corpus utterance id, or a file stem with .mel and .dur next to it.
Source load_source(const std::string& corpus_dir, const std::string& utt) {
  Source s;
  if (!corpus_dir.empty()) {
    corpus::Corpus c(corpus_dir);
    for (auto split : {corpus::Split::kTrain, corpus::Split::kVal, corpus::Split::kTest})
      for (const auto& info : c.manifest().split(split))
        if (info.id == utt) {
          s.utt = c.load(info);
          s.manifest = c.manifest();
          return s;
        }
    throw InvalidInput("utterance '" + utt + "' is not in " + corpus_dir);
  }
  s.utt.id = fs::path(utt).filename().string();
  s.utt.mel = features::read_mel(utt + ".mel");
  s.utt.phonemes = features::read_durations(utt + ".dur");
  if (s.utt.phonemes.total_frames() != s.utt.frames())
    throw AlignmentError(utt + ": durations sum to " + std::to_string(s.utt.phonemes.total_frames()) +
                         " frames but the mel has " + std::to_string(s.utt.frames()));
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained prosody transfer: synthetic corpora, training, transfer and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pxfer 0.1.0");

  Common common;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", common.config_path, "Run configuration JSON")->check(CLI::ExistingFile);
    c->add_option("--seed", common.seed, "Seed (overrides the config)");
  };

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic multi-speaker corpus");
  std::string g_out;
  std::optional<int> g_speakers, g_phonemes, g_utts, g_unseen, g_mels;
  gen->add_option("--out", g_out, "Output directory")->required();
  gen->add_option("--speakers", g_speakers, "Training speakers");
  gen->add_option("--phonemes", g_phonemes, "Phoneme inventory size");
  gen->add_option("--utts", g_utts, "Utterances per speaker");
  gen->add_option("--unseen", g_unseen, "Extra speakers used only for testing");
  gen->add_option("--n-mels", g_mels, "Mel bins");
  add_common(gen);

  // training stages
  std::string t_corpus, t_out, t_classifier, t_model;
  std::optional<std::uint64_t> t_steps;
  bool t_resume = false;
  auto add_train = [&](CLI::App* c) {
    c->add_option("--corpus", t_corpus, "Corpus directory")->required();
    c->add_option("--out", t_out, "Run directory")->required();
    c->add_option("--steps", t_steps, "Training steps (overrides the config)");
    c->add_flag("--resume", t_resume, "Continue from the last checkpoint in --out");
    add_common(c);
  };
  auto* tcls = app.add_subcommand("train-classifier", "Train the speaker classifier");
  add_train(tcls);
  auto* tgen = app.add_subcommand("train", "Stage 1: reconstruction + KL training");
  add_train(tgen);
  tgen->add_option("--classifier", t_classifier, "Classifier checkpoint")->required();
  auto* tft = app.add_subcommand("finetune", "Stage 2: adversarial fine-tuning");
  add_train(tft);
  tft->add_option("--model", t_model, "Stage-1 generator checkpoint")->required();

  // transfer
  auto* xfer = app.add_subcommand("transfer", "Render a source utterance's prosody in a target voice");
  std::string x_model, x_classifier, x_corpus, x_utt, x_target, x_out, x_wav;
  int x_iters = 32;
  xfer->add_option("--model", x_model, "Generator checkpoint")->required();
  xfer->add_option("--classifier", x_classifier, "Classifier checkpoint (default: the one inside --model)");
  xfer->add_option("--corpus", x_corpus, "Corpus holding --source-utt; without it --source-utt is a file stem");
  xfer->add_option("--source-utt", x_utt, "Utterance id, or stem of <stem>.mel and <stem>.dur")->required();
  xfer->add_option("--target-speaker", x_target, "Target speaker name or id")->required();
  xfer->add_option("--out", x_out, "Output mel file")->required();
  xfer->add_option("--wav", x_wav, "Optional Griffin-Lim rendering");
  xfer->add_option("--gl-iters", x_iters, "Griffin-Lim iterations")->check(CLI::NonNegativeNumber);
  add_common(xfer);

  // eval
  auto* ev = app.add_subcommand("eval", "Objective evaluation of a trained generator");
  std::string e_model, e_corpus, e_suite = "all", e_out;
  bool e_entries = false;
  ev->add_option("--model", e_model, "Generator checkpoint")->required();
  ev->add_option("--corpus", e_corpus, "Corpus directory")->required();
  ev->add_option("--suite", e_suite, "cycle | leakage | prosody | all")
      ->check(CLI::IsMember({"cycle", "leakage", "prosody", "all"}));
  ev->add_option("--out", e_out, "Write the report here instead of stdout");
  ev->add_flag("--entries", e_entries, "Include per-utterance entries");
  add_common(ev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    RunConfig rc = effective_config(common);

    if (gen->parsed()) {
      auto& s = rc.synthetic;
      if (g_speakers) s.num_speakers = *g_speakers;
      if (g_phonemes) s.num_phonemes = *g_phonemes;
      if (g_utts) s.utterances_per_speaker = *g_utts;
      if (g_unseen) s.unseen_speakers = *g_unseen;
      if (g_mels) s.n_mels = *g_mels;
      if (common.seed) s.seed = *common.seed;
      s.validate();
      if (fs::exists(g_out) && !fs::is_empty(g_out))
        throw StateError(g_out + " already exists and is not empty");
      const auto man = corpus::generate_synthetic_corpus(s, g_out);
      echo_config(g_out, rc, "gen-corpus");
      print(json{{"corpus", g_out},
                 {"speakers", man.speakers.size()},
                 {"train", man.train.size()},
                 {"val", man.val.size()},
                 {"test", man.test.size()}});
      return kExitOk;
    }

    if (tcls->parsed() || tgen->parsed() || tft->parsed()) {
      const train::Stage stage = tcls->parsed()  ? train::Stage::kClassifier
                                 : tgen->parsed() ? train::Stage::kInitial
                                                  : train::Stage::kFinetune;
      if (t_steps) rc.stage(stage).steps = *t_steps;
      rc.stage(stage).validate();
      const corpus::Corpus c(t_corpus);
      json extra{{"corpus", fs::absolute(t_corpus).string()}};
      const auto opt = run_options(t_out, t_resume);
      json summary;
      if (stage == train::Stage::kClassifier) {
        echo_config(t_out, rc, "train-classifier", extra);
        const auto r = train::train_classifier(c, rc.classifier, rc.train_classifier, rc.seed, opt);
        summary = {{"checkpoint", (fs::path(t_out) / train::kClassifierBest).string()},
                   {"best_val_accuracy", r.stats.best_val_accuracy},
                   {"best_step", r.stats.best_step}};
      } else if (stage == train::Stage::kInitial) {
        auto cls = load_classifier_file(t_classifier);
        extra["classifier"] = fs::absolute(t_classifier).string();
        echo_config(t_out, rc, "train", extra);
        const auto r = train::train_initial(c, cls, rc.model, rc.train_initial, rc.seed, opt);
        summary = {{"checkpoint", (fs::path(t_out) / train::kModelBest).string()},
                   {"initial_val_l1", r.initial_val_l1},
                   {"best_val_l1", r.best_val_l1},
                   {"best_step", r.best_step}};
      } else {
        const auto ck = load_stage(t_model, "stage-1 checkpoint", "train");
        if (train::checkpoint_kind(ck) != "generator" || ck.meta().value("stage", "") != "initial")
          throw StateError(t_model + " is not a stage-1 generator checkpoint");
        const auto stage1 = train::load_generator_checkpoint(ck);
        extra["model"] = fs::absolute(t_model).string();
        echo_config(t_out, rc, "finetune", extra);
        const auto r = train::train_finetune(c, stage1, rc.train_finetune, rc.seed, opt);
        summary = {{"checkpoint", (fs::path(t_out) / train::kModelBest).string()},
                   {"final_val_l1", r.final_val_l1},
                   {"disc_accuracy", r.disc_accuracy}};
      }
      print(summary);
      return kExitOk;
    }

    if (xfer->parsed()) {
      std::optional<train::GeneratorBundle> loaded(load_model(x_model));
      if (!x_classifier.empty()) {
        auto cls = load_classifier_file(x_classifier);
        if (cls.norm != loaded->classifier.norm)
          throw StateError(x_classifier + " was trained with different normalization than " + x_model);
        train::GeneratorBundle swapped{std::move(cls), std::move(loaded->gen), std::move(loaded->disc),
                                       std::move(loaded->centroids), loaded->meta};
        loaded.reset();
        loaded.emplace(std::move(swapped));
      }
      const auto& model = *loaded;
      const int target = resolve_speaker(x_target, model.classifier.names);
      if (!model.centroids.count(target))
        throw InvalidInput("speaker '" + x_target + "' is not a training speaker of this model");
      const auto src = load_source(x_corpus, x_utt);
      if (src.manifest && src.manifest->norm != model.norm())
        throw StateError(x_corpus + " is not the corpus this model was trained on");
      features::validate(src.utt.phonemes, int(model.gen.config().num_phonemes));
      const auto x = model.norm().apply(src.utt.mel.frames);
      features::MelSpectrogram out{model.norm().invert(model.transfer(x, src.utt.phonemes, target)),
                                   src.utt.mel.sample_rate, src.utt.mel.hop};
      features::write_mel(x_out, out);
      if (!x_wav.empty()) {
        features::MelConfig mc = src.manifest ? src.manifest->mel : features::MelConfig{};
        mc.n_mels = int(out.num_bins());
        features::write_wav(x_wav, features::mel_to_audio(out, mc, x_iters), mc.sample_rate);
      }
      json j = to_json(rc);
      io::write_text(x_out + ".config.json",
                     json{{"command", "transfer"},
                          {"config", j},
                          {"config_hash", config_hash(j)},
                          {"model", fs::absolute(x_model).string()},
                          {"source", x_utt},
                          {"target", target}}
                             .dump(2) +
                         "\n");
      print(json{{"out", x_out},
                 {"frames", out.num_frames()},
                 {"source_speaker", src.utt.speaker},
                 {"target_speaker", target},
                 {"predicted_speaker", model.classifier.predict(model.norm().apply(out.frames))}});
      return kExitOk;
    }

    if (ev->parsed()) {
      const auto model = load_model(e_model);
      const corpus::Corpus c(e_corpus);
      train::detail::check_same_corpus(c.manifest(), model.classifier);
      const json cfg = to_json(rc);
      json report{{"config_hash", config_hash(cfg)},
                  {"config", cfg},
                  {"model", fs::absolute(e_model).string()},
                  {"stage", model.meta.value("stage", "")},
                  {"step", model.meta.value("step", std::uint64_t(0))},
                  {"corpus", fs::absolute(e_corpus).string()}};
      const auto train_x = eval::embedded_examples(c, corpus::Split::kTrain, model.classifier);
      const bool all = e_suite == "all";
      if (all || e_suite == "cycle") report["cycle"] = eval::to_json(eval::cycle_report(model, train_x), e_entries);
      if (all || e_suite == "leakage") {
        std::vector<train::Example> xs;
        for (auto split : {corpus::Split::kTrain, corpus::Split::kVal, corpus::Split::kTest})
          for (auto& ex : eval::embedded_examples(c, split, model.classifier))
            if (model.centroids.count(ex.utt.speaker)) xs.push_back(std::move(ex));
        report["leakage"] = eval::to_json(eval::leakage_probe(model, xs, rc.seed, rc.eval.probe));
      }
      if (all || e_suite == "prosody") {
        const auto test = eval::embedded_examples(c, corpus::Split::kTest, model.classifier);
        report["prosody"] = eval::to_json(
            eval::transfer_report(model, test, eval::silence_floor(c.manifest().mel, rc.eval.silence_db)), e_entries);
      }
      if (e_out.empty()) {
        print(report);
      } else {
        io::write_text(e_out, report.dump(2) + "\n");
      }
      return kExitOk;
    }
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitState;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const AlignmentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
