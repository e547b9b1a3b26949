#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rvos/config.hpp"
#include "rvos/io.hpp"
#include "rvos/metrics.hpp"
#include "rvos/pipeline.hpp"

namespace rvos {

inline std::vector<SceneSpec> make_corpus(const DataConfig& data) {
  std::vector<SceneSpec> scenes;
  for (std::size_t i = 0; i < data.scenes; ++i) scenes.push_back(generate_scene(data.seed + i, data.knobs));
  return scenes;
}

/// Scores of a model on a set of scenes; every expression is one object sequence.
struct EvalReport {
  double j = 0.0, f = 0.0, jf = 0.0;
  double overall_iou = 0.0, mean_iou = 0.0, map = 0.0;
};

struct PredictedScene {
  std::string video;
  std::vector<std::vector<BinaryMask>> masks;  // [expression][frame]
  std::vector<double> scores;                  // [expression]
};

inline PredictedScene predict_scene(const Model& model, const SceneSpec& scene, Mode mode) {
  PredictedScene out{scene.name(), {}, {}};
  for (const auto& p : run_pipeline(model, scene, mode)) {
    std::vector<BinaryMask> masks;
    for (const auto& m : p.masks) masks.push_back(BinaryMask::from_logits(m));
    out.masks.push_back(std::move(masks));
    out.scores.push_back(p.score);
  }
  return out;
}

inline EvalReport evaluate_predictions(const std::vector<PredictedScene>& preds, const std::vector<SceneSpec>& scenes) {
  if (preds.size() != scenes.size()) throw MetricError("evaluate: prediction and scene counts differ");
  std::vector<ObjectSequence> objects;
  std::vector<MaskPair> pairs;
  std::vector<ScoredPrediction> scored;
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (std::size_t e = 0; e < scenes[s].masks.size(); ++e) {
      ObjectSequence seq{scenes[s].name(), {}};
      for (std::size_t t = 0; t < scenes[s].masks[e].size(); ++t) {
        MaskPair pair{preds[s].masks.at(e).at(t), scenes[s].masks[e][t]};
        seq.frames.push_back(pair);
        pairs.push_back(pair);
        scored.push_back({pair, preds[s].scores.at(e)});
      }
      objects.push_back(std::move(seq));
    }
  const JFScores jf = jf_mean(objects);
  return {jf.j, jf.f, jf.jf, overall_iou(pairs), mean_iou(pairs), map_at_thresholds(scored)};
}

inline EvalReport evaluate_model(const Model& model, const std::vector<SceneSpec>& scenes, Mode mode = Mode::single) {
  std::vector<PredictedScene> preds;
  for (const auto& s : scenes) preds.push_back(predict_scene(model, s, mode));
  return evaluate_predictions(preds, scenes);
}

/// SGD with momentum, or AdamW, over every parameter of a store.
class Optimizer {
 public:
  Optimizer(ParamStore& store, const TrainConfig& cfg) : store_(store), cfg_(cfg) {
    for (const auto& [name, t] : store.items()) {
      first_[name].assign(t.numel(), 0.0);
      if (cfg.optimizer == "adamw") second_[name].assign(t.numel(), 0.0);
    }
  }

  /// Applies one update from the accumulated gradients; returns the pre-clip gradient norm.
  double step() {
    double sq = 0.0;
    std::map<std::string, std::vector<double>> grads;
    for (const auto& [name, t] : store_.items()) {
      auto g = store_.gradient(name);
      for (double v : g) sq += v * v;
      grads.emplace(name, std::move(g));
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
    const double factor = cfg_.clip > 0.0 && norm > cfg_.clip ? cfg_.clip / norm : 1.0;
    const double lr = learning_rate();
    ++steps_;
    for (auto& [name, g] : grads) {
      auto& p = store_.values(name);
      auto& m = first_[name];
      if (cfg_.optimizer == "adamw") {
        auto& v = second_[name];
        const double b1 = cfg_.momentum, b2 = cfg_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double gi = g[i] * factor;
          m[i] = b1 * m[i] + (1.0 - b1) * gi;
          v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
          p[i] -= lr * (m[i] / c1 / (std::sqrt(v[i] / c2) + 1e-8) + cfg_.weight_decay * p[i]);
        }
      } else {
        for (std::size_t i = 0; i < p.size(); ++i) {
          m[i] = cfg_.momentum * m[i] + g[i] * factor + cfg_.weight_decay * p[i];
          p[i] -= lr * m[i];
        }
      }
    }
    store_.zero_grad();
    return norm;
  }

  /// Learning rate of the next step.
  double learning_rate() const {
    if (cfg_.schedule != "cosine" || cfg_.iterations == 0) return cfg_.lr;
    const double pi = std::acos(-1.0);
    return 0.5 * cfg_.lr * (1.0 + std::cos(pi * static_cast<double>(steps_) / static_cast<double>(cfg_.iterations)));
  }

 private:
  ParamStore& store_;
  TrainConfig cfg_;
  std::map<std::string, std::vector<double>> first_, second_;
  std::size_t steps_ = 0;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<double> losses;  // loss of iteration i, evaluated before its update
  double seconds = 0.0;
};

inline std::string checkpoint_name(std::size_t iteration) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "ckpt_%06zu.sgck", iteration);
  return buf;
}

/// Trains on the configured synthetic corpus, one scene per iteration in round-robin order.
/// When `out_dir` is non-empty, checkpoints (including one before the first update),
/// the final model and loss_curve.csv are written there.
inline TrainResult train_desk_scale(const RunConfig& cfg, const std::string& out_dir = {},
                                    const std::function<void(std::size_t, double)>& on_iteration = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto corpus = make_corpus(cfg.data);
  TrainResult result;
  result.model = std::make_unique<Model>(cfg.model);
  Model& model = *result.model;
  Optimizer opt(model.store, cfg.train);
  const Mode mode = cfg.train.multi_object ? Mode::multi : Mode::single;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_checkpoint((fs::path(out_dir) / checkpoint_name(0)).string(), cfg, model);
  }
  for (std::size_t it = 0; it < cfg.train.iterations; ++it) {
    const SceneSpec& scene = corpus[it % corpus.size()];
    double value = 0.0;
    try {
      const SceneLoss loss = scene_loss(model, scene, cfg.loss, mode);
      value = loss.loss.item();
      loss.loss.backward();
      opt.step();
    } catch (const NumericError& e) {
      throw NumericError("training aborted at iteration " + std::to_string(it) + " on " + scene.name() + ": " +
                         e.what());
    }
    result.losses.push_back(value);
    if (on_iteration) on_iteration(it, value);
    if (!out_dir.empty() && (it + 1) % cfg.train.checkpoint_every == 0) {
      save_checkpoint((fs::path(out_dir) / checkpoint_name(it + 1)).string(), cfg, model);
    }
  }
  if (!out_dir.empty()) {
    save_checkpoint((fs::path(out_dir) / "final.sgck").string(), cfg, model);
    std::ofstream csv(fs::path(out_dir) / "loss_curve.csv");
    csv << "iteration,loss\n";
    csv.precision(17);
    for (std::size_t i = 0; i < result.losses.size(); ++i) csv << i << "," << result.losses[i] << "\n";
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace rvos
