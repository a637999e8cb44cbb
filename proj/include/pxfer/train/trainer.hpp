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
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pxfer/corpus/batching.hpp"
#include "pxfer/corpus/corpus.hpp"
#include "pxfer/models/discriminator.hpp"
#include "pxfer/models/generator.hpp"
#include "pxfer/models/speaker_classifier.hpp"
#include "pxfer/train/bundle.hpp"
#include "pxfer/train/checkpoint.hpp"
#include "pxfer/train/config.hpp"

namespace pxfer::train {

namespace fs = std::filesystem;

// File names inside a run directory.
inline constexpr char kClassifierBest[] = "classifier.ckpt";
inline constexpr char kClassifierLast[] = "classifier.last.ckpt";
inline constexpr char kModelBest[] = "model.ckpt";
inline constexpr char kModelLast[] = "last.ckpt";
inline constexpr char kMetricsLog[] = "metrics.jsonl";
inline constexpr char kValidationLog[] = "validation.jsonl";

// One utterance held in memory for training.
struct Example {
  corpus::Utterance utt;
  nn::Array<float> x;  // normalized frames
  nn::Array<float> e;  // classifier embedding (generator stages)
  int label = -1;      // class index (classifier stage)
};

inline std::vector<Example> load_examples(const corpus::Corpus& c, corpus::Split split) {
  std::vector<Example> out;
  for (const auto& info : c.manifest().split(split)) {
    Example ex;
    ex.utt = c.load(info);
    ex.x = c.normalized(ex.utt);
    out.push_back(std::move(ex));
  }
  return out;
}

struct RunOptions {
  fs::path out_dir;             // empty: nothing is written
  bool resume = false;          // continue from the last checkpoint in out_dir
  std::uint64_t stop_after = 0; // > 0: stop once this many steps are done (simulated interruption)
  std::function<void(const json&)> on_log;
};

// JSON-lines log. On resume, lines at or after the resume step are dropped.
class JsonLog {
 public:
  JsonLog() = default;
  JsonLog(const fs::path& path, std::optional<std::uint64_t> resume_step) : path_(path) {
    std::string kept;
    if (resume_step && fs::exists(path)) {
      std::istringstream in(io::read_text(path));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.value("step", std::uint64_t(0)) < *resume_step) kept += line + "\n";
      }
    }
    io::write_text(path, kept);
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open " + path.string());
  }

  void write(const json& j) {
    if (!out_.is_open()) return;
    out_ << j.dump() << "\n";
    out_.flush();
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

namespace detail {

inline std::vector<corpus::UtteranceInfo> infos_of(const std::vector<Example>& xs) {
  std::vector<corpus::UtteranceInfo> out;
  for (const auto& e : xs) out.push_back({e.utt.id, e.utt.speaker, e.utt.frames()});
  return out;
}

// Batch for a global step. The batch count per epoch does not depend on the
// epoch, so (seed, step) determines the batch without replaying history.
class BatchSchedule {
 public:
  BatchSchedule(std::vector<corpus::UtteranceInfo> items, std::size_t batch_size, std::uint64_t seed)
      : items_(std::move(items)), batch_size_(batch_size), seed_(seed) {
    if (items_.empty()) throw InvalidInput("training split is empty");
    per_epoch_ = corpus::make_batches(items_, batch_size_, seed_, 0).size();
  }

  const std::vector<std::size_t>& at(std::uint64_t step) {
    const std::uint64_t epoch = step / per_epoch_;
    if (!cached_ || *cached_ != epoch) {
      batches_ = corpus::make_batches(items_, batch_size_, seed_, epoch);
      cached_ = epoch;
    }
    return batches_[step % per_epoch_];
  }

 private:
  std::vector<corpus::UtteranceInfo> items_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t per_epoch_ = 0;
  std::optional<std::uint64_t> cached_;
  std::vector<std::vector<std::size_t>> batches_;
};

inline void require_finite(double v, const char* what, std::uint64_t step) {
  if (!std::isfinite(v))
    throw TrainingError(std::string("non-finite ") + what + " at step " + std::to_string(step));
}

inline double grad_norm(const nn::ParameterSet<float>& ps) {
  double s = 0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (float g : ps[i].grad.data) s += double(g) * double(g);
  return std::sqrt(s);
}

inline std::vector<nn::Array<float>> snapshot(const nn::ParameterSet<float>& ps) {
  std::vector<nn::Array<float>> out;
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(ps[i].value);
  return out;
}

inline void restore(nn::ParameterSet<float>& ps, const std::vector<nn::Array<float>>& values) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i].value = values[i];
}

inline void emit(const RunOptions& opt, JsonLog& log, const json& j) {
  log.write(j);
  if (opt.on_log) opt.on_log(j);
}

}  // namespace detail

// ---- speaker classifier ---------------------------------------------------------

struct ClassifierStats {
  double best_val_accuracy = -1;
  double best_val_loss = 0;
  std::uint64_t best_step = 0;
  double final_loss = 0;
};

struct ClassifierResult {
  ClassifierBundle bundle;  // best-validation parameters
  ClassifierStats stats;
};

struct ClassifierEval {
  double accuracy = 0;
  double loss = 0;
};

inline ClassifierEval evaluate_classifier(const models::SpeakerClassifier<float>& m, const std::vector<Example>& xs) {
  ClassifierEval r;
  if (xs.empty()) return r;
  for (const auto& ex : xs) {
    nn::Tape<float> t;
    auto o = m.forward(t, ex.x);
    r.loss += double(nn::cross_entropy(o.logits, {ex.label}).value()[0]);
    const auto& l = o.logits.value().data;
    r.accuracy += (std::max_element(l.begin(), l.end()) - l.begin()) == ex.label ? 1.0 : 0.0;
  }
  r.accuracy /= double(xs.size());
  r.loss /= double(xs.size());
  return r;
}

inline std::vector<Example> labelled(std::vector<Example> xs, const std::vector<int>& speakers) {
  std::vector<Example> out;
  for (auto& ex : xs) {
    auto it = std::find(speakers.begin(), speakers.end(), ex.utt.speaker);
    if (it == speakers.end()) continue;
    ex.label = int(it - speakers.begin());
    out.push_back(std::move(ex));
  }
  return out;
}

inline ClassifierResult train_classifier(const corpus::Corpus& corpus, const models::ClassifierConfig& mcfg,
                                         const TrainConfig& cfg, std::uint64_t seed, const RunOptions& opt = {}) {
  cfg.validate();
  mcfg.validate();
  const auto& man = corpus.manifest();
  const std::vector<int> speakers = man.train_speakers();
  if (speakers.size() < 2) throw InvalidConfig("classifier training needs at least 2 training speakers");
  const auto train = labelled(load_examples(corpus, corpus::Split::kTrain), speakers);
  const auto val = labelled(load_examples(corpus, corpus::Split::kVal), speakers);
  const auto& held_out = val.empty() ? train : val;

  ClassifierBundle probe{models::SpeakerClassifier<float>(mcfg, std::size_t(man.mel.n_mels), speakers.size(), seed),
                         speakers, man.speakers, man.norm};
  auto& m = probe.model;
  nn::Adam<float> adam(m.params(), cfg.adam(cfg.lr));

  const bool files = !opt.out_dir.empty();
  std::uint64_t start = 0;
  ClassifierStats res;
  std::vector<nn::Array<float>> best = detail::snapshot(m.params());
  if (files && opt.resume && fs::exists(opt.out_dir / kClassifierLast)) {
    const auto ck = Checkpoint::load(opt.out_dir / kClassifierLast);
    if (checkpoint_kind(ck) != "classifier") throw StateError("resume checkpoint is not a classifier");
    const json meta = ck.meta();
    restore_params(ck, m.params(), {"cls."});
    restore_optimizer(ck, adam, "opt.cls");
    start = meta.at("step").get<std::uint64_t>();
    res.best_val_accuracy = meta.at("best_val_accuracy").get<double>();
    res.best_val_loss = meta.at("best_val_loss").get<double>();
    res.best_step = meta.at("best_step").get<std::uint64_t>();
    if (fs::exists(opt.out_dir / kClassifierBest)) {
      nn::ParameterSet<float>& ps = m.params();
      const auto bck = Checkpoint::load(opt.out_dir / kClassifierBest);
      for (std::size_t i = 0; i < ps.size(); ++i) best[i] = bck.f32(ps[i].name);
    }
  }
  if (files) fs::create_directories(opt.out_dir);
  JsonLog log, vlog;
  if (files) {
    log = JsonLog(opt.out_dir / kMetricsLog, opt.resume ? std::optional(start) : std::nullopt);
    vlog = JsonLog(opt.out_dir / kValidationLog, opt.resume ? std::optional(start + 1) : std::nullopt);
  }

  auto save = [&](const fs::path& path, std::uint64_t step, bool best_copy) {
    Checkpoint ck;
    json meta{{"kind", "classifier"},
              {"step", step},
              {"seed", seed},
              {"train", to_json(cfg)},
              {"classifier", probe.describe()},
              {"best_val_accuracy", res.best_val_accuracy},
              {"best_val_loss", res.best_val_loss},
              {"best_step", res.best_step}};
    ck.set_meta(meta);
    store_classifier(ck, probe);
    if (!best_copy) store_optimizer(ck, adam, "opt.cls");
    ck.save(path);
  };

  detail::BatchSchedule schedule(detail::infos_of(train), cfg.batch_size, seed);
  for (std::uint64_t step = start; step < cfg.steps; ++step) {
    const auto& batch = schedule.at(step);
    nn::Tape<float> t;
    std::vector<nn::Var<float>> losses;
    for (std::size_t i : batch) {
      auto o = m.forward(t, train[i].x);
      losses.push_back(nn::cross_entropy(o.logits, {train[i].label}));
    }
    auto loss = nn::scale(nn::add_n(losses), 1.0f / float(batch.size()));
    const double lv = loss.value()[0];
    detail::require_finite(lv, "classifier loss", step);
    t.backward(loss);
    double gn;
    try {
      gn = adam.step();
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    res.final_loss = lv;
    if (step % cfg.log_interval == 0)
      detail::emit(opt, log, json{{"step", step}, {"loss", lv}, {"grad_norm", gn}});

    const std::uint64_t done = step + 1;
    const bool stopping = opt.stop_after > 0 && done >= opt.stop_after;
    if (done % cfg.val_interval == 0 || done == cfg.steps) {
      const auto ev = evaluate_classifier(m, held_out);
      const bool improved = ev.accuracy > res.best_val_accuracy ||
                            (ev.accuracy == res.best_val_accuracy && ev.loss < res.best_val_loss);
      if (improved) {
        res.best_val_accuracy = ev.accuracy;
        res.best_val_loss = ev.loss;
        res.best_step = done;
        best = detail::snapshot(m.params());
        if (files) save(opt.out_dir / kClassifierBest, done, true);
      }
      detail::emit(opt, vlog, json{{"step", done}, {"val_accuracy", ev.accuracy}, {"val_loss", ev.loss}});
      if (files) save(opt.out_dir / kClassifierLast, done, false);
    } else if (stopping && files) {
      save(opt.out_dir / kClassifierLast, done, false);
    }
    if (stopping) break;
  }
  detail::restore(m.params(), best);
  return ClassifierResult{std::move(probe), res};
}

// ---- generator stages --------------------------------------------------------------

struct GeneratorResult {
  std::optional<GeneratorBundle> bundle;  // best-validation parameters
  double initial_val_l1 = 0;
  double best_val_l1 = 0;
  double final_val_l1 = 0;
  std::uint64_t best_step = 0;
  double final_loss = 0;
  double disc_accuracy = 0;  // fine-tuning only, on held-out windows
};

struct GenBatchLoss {
  nn::Var<float> stage1;              // mean over the batch of recon + alpha * kl
  double recon = 0, kl = 0;
  std::vector<nn::Var<float>> x_hat;  // one per item, on the same tape
};

// Stage-1 objective for one batch; draws the posterior noise from `rng`.
inline GenBatchLoss generator_batch_loss(nn::Tape<float>& t, const models::Generator<float>& gen,
                                         const std::vector<const Example*>& batch, nn::Rng& rng, double alpha) {
  GenBatchLoss out;
  std::vector<nn::Var<float>> losses;
  for (const Example* ex : batch) {
    const auto noise = gen.sample_noise(ex->x.rows(), rng);
    auto o = gen.forward(t, ex->x, ex->utt.phonemes, ex->e, ex->e, models::EncodeMode::kSample, &noise);
    losses.push_back(o.total(float(alpha)));
    out.recon += double(o.reconstruction.value()[0]) / double(batch.size());
    out.kl += double(o.kl.value()[0]) / double(batch.size());
    out.x_hat.push_back(o.x_hat);
  }
  out.stage1 = nn::scale(nn::add_n(losses), 1.0f / float(batch.size()));
  return out;
}

// Mean deterministic reconstruction L1 (normalized space).
inline double validation_l1(const models::Generator<float>& gen, const std::vector<Example>& xs) {
  double s = 0;
  for (const auto& ex : xs) {
    nn::Tape<float> t;
    s += double(gen.forward(t, ex.x, ex.utt.phonemes, ex.e, ex.e, models::EncodeMode::kDeterministic)
                    .reconstruction.value()[0]);
  }
  return xs.empty() ? 0.0 : s / double(xs.size());
}

// Windows of W rows, `per_item` per example, indices drawn from `rng`.
inline std::vector<std::vector<std::size_t>> draw_windows(const std::vector<std::size_t>& lengths, std::size_t W,
                                                          std::size_t per_item, nn::Rng& rng) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t T : lengths)
    for (std::size_t k = 0; k < per_item; ++k) out.push_back(models::window_indices(T, W, rng));
  return out;
}

// Fraction of windows the discriminator puts on the right side of 0.
inline double discriminator_accuracy(const models::Discriminator<float>& d, const models::Generator<float>& gen,
                                     const std::vector<Example>& xs, std::size_t per_item, std::uint64_t seed) {
  nn::Rng rng(nn::mix_seed(seed, 0xACC));
  std::size_t right = 0, total = 0;
  const std::size_t W = d.config().window;
  for (const auto& ex : xs) {
    const auto fake = gen.infer(ex.x, ex.utt.phonemes, ex.e, ex.e);
    for (std::size_t k = 0; k < per_item; ++k) {
      nn::Tape<float> t;
      const float r = d.forward(t, nn::gather_rows(t.constant(ex.x), models::window_indices(ex.x.rows(), W, rng)))
                          .value()[0];
      const float f =
          d.forward(t, nn::gather_rows(t.constant(fake), models::window_indices(fake.rows(), W, rng))).value()[0];
      right += (r > 0) + (f < 0);
      total += 2;
    }
  }
  return total ? double(right) / double(total) : 0.0;
}

// stage1 + lambda * hinge generator loss on the given fake windows. The
// discriminator enters the tape frozen. Returns {total, adversarial term}.
inline std::pair<nn::Var<float>, nn::Var<float>> adversarial_objective(
    nn::Tape<float>& t, const GenBatchLoss& bl, models::Discriminator<float>& disc,
    const std::vector<std::vector<std::size_t>>& fake_idx, std::size_t per_item, double lambda) {
  t.freeze(disc.params());
  std::vector<nn::Var<float>> fakes;
  for (std::size_t k = 0; k < fake_idx.size(); ++k) fakes.push_back(nn::gather_rows(bl.x_hat[k / per_item], fake_idx[k]));
  auto adv = nn::hinge_generator_loss(disc.score(t, fakes));
  return {nn::add(bl.stage1, nn::scale(adv, float(lambda))), adv};
}

namespace detail {

// Fills corpus/classifier-derived sizes, rejecting contradicting values.
inline models::ModelConfig resolve_model_config(models::ModelConfig mc, const corpus::CorpusManifest& man,
                                                const ClassifierBundle& cls) {
  auto fill = [](std::size_t& field, std::size_t value, const char* name) {
    if (field != 0 && field != value)
      throw InvalidConfig(std::string("model.") + name + " = " + std::to_string(field) + " contradicts the data (" +
                          std::to_string(value) + ")");
    field = value;
  };
  fill(mc.n_mels, std::size_t(man.mel.n_mels), "n_mels");
  fill(mc.num_phonemes, std::size_t(man.num_phonemes), "num_phonemes");
  fill(mc.speaker_dim, cls.model.embedding_dim(), "speaker_dim");
  mc.validate();
  return mc;
}

inline void check_same_corpus(const corpus::CorpusManifest& man, const ClassifierBundle& cls) {
  if (cls.norm != man.norm)
    throw StateError("classifier was trained on a corpus with different normalization statistics");
  if (cls.model.n_mels() != std::size_t(man.mel.n_mels)) throw StateError("classifier mel size differs from corpus");
}

inline void embed_all(const ClassifierBundle& cls, std::vector<Example>& xs) {
  for (auto& ex : xs) ex.e = cls.embed(ex.x);
}

inline std::map<int, nn::Array<float>> centroids_of(const std::vector<Example>& train) {
  std::map<int, std::vector<nn::Array<float>>> by;
  for (const auto& ex : train) by[ex.utt.speaker].push_back(ex.e);
  std::map<int, nn::Array<float>> out;
  for (auto& [id, es] : by) out[id] = models::centroid(es);
  return out;
}

inline std::vector<int> keys_of(const std::map<int, nn::Array<float>>& m) {
  std::vector<int> out;
  for (const auto& [k, _] : m) out.push_back(k);
  return out;
}

inline void check_disjoint(const nn::ParameterSet<float>& untouched, const char* what) {
  for (std::size_t i = 0; i < untouched.size(); ++i)
    for (float g : untouched[i].grad.data)
      if (g != 0.0f) throw InternalError(std::string(what) + " update produced a gradient for " + untouched[i].name);
}

}  // namespace detail


inline json generator_meta(const std::string& stage, std::uint64_t step, std::uint64_t seed,
                           const models::ModelConfig& mc, const TrainConfig& cfg, const ClassifierBundle& cls,
                           const std::map<int, nn::Array<float>>& centroids, const GeneratorResult& res) {
  return json{{"kind", "generator"},
              {"stage", stage},
              {"step", step},
              {"seed", seed},
              {"model", models::to_json(mc)},
              {"train", to_json(cfg)},
              {"classifier", cls.describe()},
              {"speakers", detail::keys_of(centroids)},
              {"initial_val_l1", res.initial_val_l1},
              {"best_val_l1", res.best_val_l1},
              {"best_step", res.best_step}};
}

// Stage 1: reconstruction + annealed KL.
inline GeneratorResult train_initial(const corpus::Corpus& corpus, const ClassifierBundle& classifier,
                                     const models::ModelConfig& model_cfg, const TrainConfig& cfg,
                                     std::uint64_t seed, const RunOptions& opt = {}) {
  cfg.validate();
  const auto& man = corpus.manifest();
  detail::check_same_corpus(man, classifier);
  const models::ModelConfig mc = detail::resolve_model_config(model_cfg, man, classifier);
  auto train = load_examples(corpus, corpus::Split::kTrain);
  auto val = load_examples(corpus, corpus::Split::kVal);
  detail::embed_all(classifier, train);
  detail::embed_all(classifier, val);
  const auto& held_out = val.empty() ? train : val;
  const auto centroids = detail::centroids_of(train);

  models::Generator<float> gen(mc, seed);
  nn::Adam<float> adam(gen.params(), cfg.adam(cfg.lr));
  const std::uint64_t anneal = cfg.effective_anneal_steps();

  GeneratorResult res;
  const bool files = !opt.out_dir.empty();
  std::uint64_t start = 0;
  std::vector<nn::Array<float>> best;
  if (files && opt.resume && fs::exists(opt.out_dir / kModelLast)) {
    const auto ck = Checkpoint::load(opt.out_dir / kModelLast);
    const json meta = ck.meta();
    if (checkpoint_kind(ck) != "generator" || meta.at("stage") != "initial")
      throw StateError("resume checkpoint is not a stage-1 generator");
    restore_params(ck, gen.params(), {"phon.", "ref.", "dec."});
    restore_optimizer(ck, adam, "opt.gen");
    start = meta.at("step").get<std::uint64_t>();
    res.initial_val_l1 = meta.at("initial_val_l1").get<double>();
    res.best_val_l1 = meta.at("best_val_l1").get<double>();
    res.best_step = meta.at("best_step").get<std::uint64_t>();
    const auto bck = Checkpoint::load(opt.out_dir / kModelBest);
    for (std::size_t i = 0; i < gen.params().size(); ++i) best.push_back(bck.f32(gen.params()[i].name));
  } else {
    res.initial_val_l1 = validation_l1(gen, held_out);
    res.best_val_l1 = res.initial_val_l1;
    best = detail::snapshot(gen.params());
  }
  if (files) fs::create_directories(opt.out_dir);
  JsonLog log, vlog;
  if (files) {
    log = JsonLog(opt.out_dir / kMetricsLog, opt.resume ? std::optional(start) : std::nullopt);
    vlog = JsonLog(opt.out_dir / kValidationLog, opt.resume ? std::optional(start + 1) : std::nullopt);
  }
  if (start == 0) detail::emit(opt, vlog, json{{"step", 0}, {"val_l1", res.initial_val_l1}});

  auto save = [&](const fs::path& path, std::uint64_t step, bool with_optimizer) {
    Checkpoint ck;
    store_generator(ck, generator_meta("initial", step, seed, mc, cfg, classifier, centroids, res), gen, nullptr,
                    classifier, centroids);
    if (with_optimizer) store_optimizer(ck, adam, "opt.gen");
    ck.save(path);
  };

  detail::BatchSchedule schedule(detail::infos_of(train), cfg.batch_size, seed);
  for (std::uint64_t step = start; step < cfg.steps; ++step) {
    const double alpha = anneal_alpha(step, anneal);
    nn::Rng rng(nn::mix_seed(seed, 0x5741'0000'0000ull + step));
    std::vector<const Example*> batch;
    for (std::size_t i : schedule.at(step)) batch.push_back(&train[i]);
    nn::Tape<float> t;
    auto bl = generator_batch_loss(t, gen, batch, rng, alpha);
    const double lv = bl.stage1.value()[0];
    detail::require_finite(lv, "generator loss", step);
    t.backward(bl.stage1);
    double gn;
    try {
      gn = adam.step();
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    res.final_loss = lv;
    if (step % cfg.log_interval == 0)
      detail::emit(opt, log,
                   json{{"step", step}, {"loss", lv}, {"recon", bl.recon}, {"kl", bl.kl}, {"alpha", alpha},
                        {"grad_norm", gn}});

    const std::uint64_t done = step + 1;
    const bool stopping = opt.stop_after > 0 && done >= opt.stop_after;
    if (done % cfg.val_interval == 0 || done == cfg.steps) {
      const double v = validation_l1(gen, held_out);
      res.final_val_l1 = v;
      if (v < res.best_val_l1) {
        res.best_val_l1 = v;
        res.best_step = done;
        best = detail::snapshot(gen.params());
        if (files) save(opt.out_dir / kModelBest, done, false);
      }
      detail::emit(opt, vlog, json{{"step", done}, {"val_l1", v}});
      if (files) {
        if (!fs::exists(opt.out_dir / kModelBest)) save(opt.out_dir / kModelBest, done, false);
        save(opt.out_dir / kModelLast, done, true);
      }
    } else if (stopping && files) {
      save(opt.out_dir / kModelLast, done, true);
    }
    if (stopping) break;
  }
  // Best-validation parameters are the result.
  detail::restore(gen.params(), best);
  res.bundle.emplace(GeneratorBundle{clone_classifier(classifier), std::move(gen), std::nullopt, centroids,
                                     generator_meta("initial", res.best_step, seed, mc, cfg, classifier, centroids, res)});
  return res;
}

// Stage 2: the stage-1 objective at alpha = 1 plus the adversarial term. The
// discriminator and generator are updated alternately on separate tapes.
inline GeneratorResult train_finetune(const corpus::Corpus& corpus, const GeneratorBundle& stage1,
                                      const TrainConfig& cfg, std::uint64_t seed, const RunOptions& opt = {}) {
  cfg.validate();
  const auto& man = corpus.manifest();
  detail::check_same_corpus(man, stage1.classifier);
  GeneratorBundle b = clone_generator(stage1);
  const models::ModelConfig mc = b.gen.config();
  if (mc.n_mels != std::size_t(man.mel.n_mels) || mc.num_phonemes != std::size_t(man.num_phonemes))
    throw StateError("stage-1 model does not match the corpus");
  auto train = load_examples(corpus, corpus::Split::kTrain);
  auto val = load_examples(corpus, corpus::Split::kVal);
  detail::embed_all(b.classifier, train);
  detail::embed_all(b.classifier, val);
  const auto& held_out = val.empty() ? train : val;

  if (!b.disc) b.disc.emplace(mc.discriminator, mc.n_mels, mc.leaky_slope, nn::mix_seed(seed, 0xD15C));
  models::Generator<float>& gen = b.gen;
  models::Discriminator<float>& disc = *b.disc;
  nn::Adam<float> adam_g(gen.params(), cfg.adam(cfg.lr));
  nn::Adam<float> adam_d(disc.params(), cfg.adam(cfg.disc_lr > 0 ? cfg.disc_lr : cfg.lr));
  const std::size_t W = mc.discriminator.window;

  GeneratorResult res;
  const json m1 = stage1.meta;
  res.initial_val_l1 = m1.value("initial_val_l1", 0.0);
  const bool files = !opt.out_dir.empty();
  std::uint64_t start = 0;
  if (files && opt.resume && fs::exists(opt.out_dir / kModelLast)) {
    const auto ck = Checkpoint::load(opt.out_dir / kModelLast);
    const json meta = ck.meta();
    if (checkpoint_kind(ck) != "generator" || meta.at("stage") != "finetune")
      throw StateError("resume checkpoint is not a fine-tuned generator");
    restore_params(ck, gen.params(), {"phon.", "ref.", "dec."});
    restore_params(ck, disc.params(), {"disc."});
    restore_optimizer(ck, adam_g, "opt.gen");
    restore_optimizer(ck, adam_d, "opt.disc");
    start = meta.at("step").get<std::uint64_t>();
    res.best_val_l1 = meta.at("best_val_l1").get<double>();
    res.best_step = meta.at("best_step").get<std::uint64_t>();
  } else {
    res.best_val_l1 = validation_l1(gen, held_out);
  }
  if (files) fs::create_directories(opt.out_dir);
  JsonLog log, vlog;
  if (files) {
    log = JsonLog(opt.out_dir / kMetricsLog, opt.resume ? std::optional(start) : std::nullopt);
    vlog = JsonLog(opt.out_dir / kValidationLog, opt.resume ? std::optional(start + 1) : std::nullopt);
  }

  auto meta_at = [&](std::uint64_t step) {
    return generator_meta("finetune", step, seed, mc, cfg, b.classifier, b.centroids, res);
  };
  auto save = [&](const fs::path& path, std::uint64_t step, bool with_optimizer) {
    Checkpoint ck;
    store_generator(ck, meta_at(step), gen, &disc, b.classifier, b.centroids);
    if (with_optimizer) {
      store_optimizer(ck, adam_g, "opt.gen");
      store_optimizer(ck, adam_d, "opt.disc");
    }
    ck.save(path);
  };

  std::uint64_t last_done = start;
  detail::BatchSchedule schedule(detail::infos_of(train), cfg.batch_size, seed);
  for (std::uint64_t step = start; step < cfg.steps; ++step) {
    nn::Rng rng(nn::mix_seed(seed, 0xF17E'0000'0000ull + step));
    std::vector<const Example*> batch;
    std::vector<std::size_t> lengths;
    for (std::size_t i : schedule.at(step)) {
      batch.push_back(&train[i]);
      lengths.push_back(train[i].x.rows());
    }
    nn::Tape<float> tg;
    auto bl = generator_batch_loss(tg, gen, batch, rng, 1.0);
    const auto real_idx = draw_windows(lengths, W, cfg.disc_windows, rng);
    const auto fake_idx = draw_windows(lengths, W, cfg.disc_windows, rng);
    auto owner = [&](std::size_t k) { return k / cfg.disc_windows; };

    // Discriminator update on detached generator output.
    double ld;
    {
      nn::Tape<float> td;
      std::vector<nn::Var<float>> reals, fakes;
      for (std::size_t k = 0; k < real_idx.size(); ++k) {
        reals.push_back(nn::gather_rows(td.constant(batch[owner(k)]->x), real_idx[k]));
        fakes.push_back(nn::gather_rows(td.constant(bl.x_hat[owner(k)].value()), fake_idx[k]));
      }
      auto loss_d = nn::hinge_discriminator_loss(disc.score(td, reals), disc.score(td, fakes));
      ld = loss_d.value()[0];
      detail::require_finite(ld, "discriminator loss", step);
      td.backward(loss_d);
      detail::check_disjoint(gen.params(), "discriminator");
      adam_d.step();
    }

    // Generator update against the refreshed discriminator.
    auto [total, loss_adv] = adversarial_objective(tg, bl, disc, fake_idx, cfg.disc_windows, cfg.lambda_adv);
    const double lv = total.value()[0];
    detail::require_finite(lv, "generator loss", step);
    tg.backward(total);
    detail::check_disjoint(disc.params(), "generator");
    double gn;
    try {
      gn = adam_g.step();
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    res.final_loss = lv;
    if (step % cfg.log_interval == 0)
      detail::emit(opt, log,
                   json{{"step", step}, {"loss", lv}, {"recon", bl.recon}, {"kl", bl.kl},
                        {"adv", double(loss_adv.value()[0])}, {"disc_loss", ld}, {"grad_norm", gn}});

    const std::uint64_t done = step + 1;
    last_done = done;
    const bool stopping = opt.stop_after > 0 && done >= opt.stop_after;
    if (done % cfg.val_interval == 0 || done == cfg.steps) {
      const double v = validation_l1(gen, held_out);
      res.final_val_l1 = v;
      res.disc_accuracy = discriminator_accuracy(disc, gen, held_out, cfg.disc_windows, seed);
      if (v < res.best_val_l1) {
        res.best_val_l1 = v;
        res.best_step = done;
      }
      detail::emit(opt, vlog, json{{"step", done}, {"val_l1", v}, {"disc_accuracy", res.disc_accuracy}});
      if (files) {
        save(opt.out_dir / kModelBest, done, false);
        save(opt.out_dir / kModelLast, done, true);
      }
    } else if (stopping && files) {
      save(opt.out_dir / kModelLast, done, true);
    }
    if (stopping) break;
  }
  b.meta = meta_at(last_done);
  res.bundle.emplace(std::move(b));
  return res;
}

}  // namespace pxfer::train
