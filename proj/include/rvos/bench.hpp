#pragma once

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <vector>

#include "rvos/metrics.hpp"
#include "rvos/pipeline.hpp"

namespace rvos {

/// A crowded scene with enough distinct objects for ten expressions.
inline SceneKnobs bench_scene_knobs(std::size_t expressions = 10) {
  SceneKnobs k;
  k.objects = expressions;
  k.expressions = expressions;
  k.min_size = 3.0;
  k.max_size = 4.5;
  k.max_speed = 1.0;
  k.gap = 1;
  return k;
}

struct BenchRow {
  std::size_t expressions = 0;
  double single_ms = 0.0;  // per object per frame, median of runs
  double multi_ms = 0.0;
  double speedup = 0.0;    // single_ms / multi_ms
  std::size_t encoder_calls_single = 0;
  std::size_t encoder_calls_multi = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double time_run(const Model& model, const SceneSpec& scene, const std::vector<SceneExpression>& exprs, Mode mode,
                       PipelineCounters& counters) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = run_pipeline(model, scene.frames, exprs, mode, &counters);
  const auto t1 = std::chrono::steady_clock::now();
  if (out.size() != exprs.size()) throw std::logic_error("bench: missing predictions");
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace detail

/// Per-object, per-frame latency of single and multi mode for each expression count,
/// taking the median of `repeats` timed runs after one warm-up run.
inline std::vector<BenchRow> bench_throughput(const Model& model, const SceneSpec& scene,
                                              const std::vector<std::size_t>& counts = {1, 2, 5, 10},
                                              std::size_t repeats = 5) {
  std::vector<BenchRow> rows;
  const double frames = static_cast<double>(scene.frames.size());
  for (std::size_t n : counts) {
    if (n == 0 || n > scene.expressions.size()) throw ConfigError("bench: expression count exceeds the scene");
    const std::vector<SceneExpression> exprs(scene.expressions.begin(), scene.expressions.begin() + static_cast<long>(n));
    BenchRow row;
    row.expressions = n;
    std::vector<double> single, multi;
    PipelineCounters warm;
    detail::time_run(model, scene, exprs, Mode::single, warm);
    detail::time_run(model, scene, exprs, Mode::multi, warm);
    for (std::size_t r = 0; r < repeats; ++r) {
      PipelineCounters cs, cm;
      single.push_back(detail::time_run(model, scene, exprs, Mode::single, cs));
      multi.push_back(detail::time_run(model, scene, exprs, Mode::multi, cm));
      row.encoder_calls_single = cs.visual_encoder;
      row.encoder_calls_multi = cm.visual_encoder;
    }
    const double per = 1.0 / (static_cast<double>(n) * frames);
    row.single_ms = detail::median(single) * per;
    row.multi_ms = detail::median(multi) * per;
    row.speedup = row.single_ms / row.multi_ms;
    rows.push_back(row);
  }
  return rows;
}

struct DriftReport {
  double decoder_drift = 0.0;  // drift_score(F_vl, F_vl^d)
  double split_drift = 0.0;    // drift_score between two random halves of F_vl
  std::size_t tokens = 0;
};

/// Encoded tokens F_vl of every frame and expression, and the same tokens after a
/// two-layer nonlinear decoder (the trained decoder layers run as token self-attention).
inline DriftReport drift_demo(const Model& model, const std::vector<SceneSpec>& scenes, std::uint64_t seed = 7) {
  NoGradGuard no_grad;
  std::vector<Tensor> encoded_rows, decoded_rows;
  for (const auto& scene : scenes) {
    const auto visual = encode_visual(model, scene.frames);
    for (const auto& expr : encode_expressions(model, scene.expressions)) {
      for (const auto& map : fuse_and_encode(model, visual, {expr}, Mode::single)) {
        const Tensor tokens = tokens_from_map(map);
        const Tensor pos = sine_position_encoding(map.dim(1), map.dim(2), map.dim(0));
        encoded_rows.push_back(tokens);
        decoded_rows.push_back(decode_embeddings(tokens, tokens, model.transformer, model.config.position ? &pos : nullptr));
      }
    }
  }
  const Tensor a = concat0(encoded_rows), b = concat0(decoded_rows);
  DriftReport r;
  r.tokens = a.dim(0);
  r.decoder_drift = drift_score(a, b);

  std::vector<std::size_t> order(a.dim(0));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = order.size() / 2;
  const Tensor first = gather_rows(a, std::vector<std::size_t>(order.begin(), order.begin() + static_cast<long>(half)));
  const Tensor second = gather_rows(a, std::vector<std::size_t>(order.begin() + static_cast<long>(half), order.end()));
  r.split_drift = drift_score(first, second);
  return r;
}

}  // namespace rvos
