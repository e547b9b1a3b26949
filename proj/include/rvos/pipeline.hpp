#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "rvos/matching.hpp"
#include "rvos/model.hpp"
#include "rvos/multi_object.hpp"

namespace rvos {

enum class Mode { single, multi };

inline Mode parse_mode(const std::string& s) {
  if (s == "single") return Mode::single;
  if (s == "multi") return Mode::multi;
  throw ConfigError("unknown pipeline mode '" + s + "' (expected single or multi)");
}

/// Call counts of the heavy stages, one tick per clip-level invocation.
struct PipelineCounters {
  std::size_t visual_encoder = 0;
  std::size_t fusion = 0;
  std::size_t transformer_encoder = 0;
  std::size_t decoupling = 0;
};

/// Per-frame heads of every instance query for one expression.
struct ExpressionHeads {
  DecoupledInstance instance;
  std::vector<std::vector<Tensor>> patch_masks;  // [frame][query] -> [p^2, H/16, W/16]
  std::vector<Tensor> boxes;                     // [frame] -> [N, 4]
  std::vector<Tensor> score_logits;              // [frame] -> [N]
};

/// Inference result of one expression.
struct ExpressionPrediction {
  std::size_t query = 0;             // selected instance query
  std::vector<Tensor> masks;         // [frame] -> full-resolution logits [H, W]
  std::vector<Box> boxes;            // [frame]
  std::vector<double> scores;        // [frame], sigmoid of the selected query
  double score = 0.0;                // mean over frames
};

inline std::vector<VisualFeatures> encode_visual(const Model& model, const std::vector<Tensor>& frames,
                                                 PipelineCounters* counters = nullptr) {
  if (frames.empty()) throw ShapeError("encode_visual: clip has no frames");
  if (counters) ++counters->visual_encoder;
  std::vector<VisualFeatures> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(toy_visual_encoder(f, model.visual));
  return out;
}

namespace detail {

inline Tensor fuse_scale(const Model& model, const ExpressionSet& exprs, const Tensor& visual, const SCFParams& p,
                         Mode mode) {
  if (mode == Mode::single) {
    if (exprs.size() != 1) throw ConfigError("single-object fusion takes exactly one expression");
    if (model.config.scf_enabled) return scf(exprs.front().words, visual, p, model.config.bandwidth);
    return attention_fusion(exprs.front().words, visual, p.attention);
  }
  if (model.config.scf_enabled) return multi_instance_fusion(exprs, visual, p, model.config.bandwidth);
  const Tensor tokens = tokens_from_map(visual);
  return map_from_tokens(mul(tokens, semantic_fusion(exprs, tokens, p.attention)), visual.dim(1), visual.dim(2));
}

}  // namespace detail

/// Fuses words into the stride-8/16/32 maps, merges them at stride 16 and runs the
/// transformer encoder: one encoded map [C, H/16, W/16] per frame.
inline std::vector<Tensor> fuse_and_encode(const Model& model, const std::vector<VisualFeatures>& visual,
                                           const ExpressionSet& exprs, Mode mode, PipelineCounters* counters = nullptr) {
  if (counters) {
    ++counters->fusion;
    ++counters->transformer_encoder;
  }
  std::vector<Tensor> encoded;
  encoded.reserve(visual.size());
  for (const auto& v : visual) {
    const Tensor f8 = detail::fuse_scale(model, exprs, v.s8, model.fusion8, mode);
    const Tensor f16 = detail::fuse_scale(model, exprs, v.s16, model.fusion16, mode);
    const Tensor f32 = detail::fuse_scale(model, exprs, v.s32, model.fusion32, mode);
    const Tensor merged = add(add(avg_pool2(f8), f16), resize_bilinear(f32, 2));
    encoded.push_back(encode_features(merged, model.transformer, model.config.position));
  }
  return encoded;
}

/// Decoupling, instance decoding, kernels and heads for one expression.
inline ExpressionHeads decode_expression(const Model& model, const std::vector<Tensor>& encoded, const Expression& expr,
                                         PipelineCounters* counters = nullptr) {
  if (counters) ++counters->decoupling;
  const std::size_t h = encoded.front().dim(1), w = encoded.front().dim(2);
  const Tensor pos = sine_position_encoding(h, w, model.config.dim);
  ExpressionHeads out;
  out.instance = decouple_instances(encoded, expr, model.decouple_gate, model.transformer,
                                    model.config.position ? &pos : nullptr);
  const CPKConfig cfg = model.config.cpk();
  for (std::size_t t = 0; t < encoded.size(); ++t) {
    const Tensor emb = select0(out.instance.embeddings, t);
    const Tensor& gated = out.instance.features[t];
    std::vector<Tensor> masks;
    for (const auto& k : predict_cpk(emb, tokens_from_map(gated), model.cpk, cfg)) masks.push_back(apply_cpk(k, gated));
    out.patch_masks.push_back(std::move(masks));
    out.boxes.push_back(predict_boxes(emb, model.transformer));
    out.score_logits.push_back(score_logits(emb, model.transformer));
  }
  return out;
}

/// Full-resolution logits from a stride-16 patch mask, with or without the optimizer.
inline Tensor refine_mask(const Model& model, const Tensor& patch_mask, const VisualFeatures& visual) {
  if (model.config.mso_enabled) return optimize_masks(patch_mask, visual.s8, visual.s4, model.mso, model.config.patch);
  return upsample_masks(patch_mask);
}

/// Query with the highest mean confidence over frames (lowest index on ties).
inline std::size_t select_query(const ExpressionHeads& heads) {
  const std::size_t n = heads.score_logits.front().numel();
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t q = 0; q < n; ++q) {
    double acc = 0.0;
    for (const auto& s : heads.score_logits) acc += detail::sigmoid_scalar(s[q]);
    acc /= static_cast<double>(heads.score_logits.size());
    if (acc > best_score) {
      best_score = acc;
      best = q;
    }
  }
  return best;
}

inline ExpressionPrediction predict_expression(const Model& model, const std::vector<VisualFeatures>& visual,
                                               const ExpressionHeads& heads) {
  ExpressionPrediction p;
  p.query = select_query(heads);
  for (std::size_t t = 0; t < visual.size(); ++t) {
    p.masks.push_back(refine_mask(model, heads.patch_masks[t][p.query], visual[t]));
    const Tensor& b = heads.boxes[t];
    p.boxes.push_back({b.at(p.query, 0), b.at(p.query, 1), b.at(p.query, 2), b.at(p.query, 3)});
    p.scores.push_back(detail::sigmoid_scalar(heads.score_logits[t][p.query]));
  }
  double acc = 0.0;
  for (double s : p.scores) acc += s;
  p.score = acc / static_cast<double>(p.scores.size());
  return p;
}

inline ExpressionSet encode_expressions(const Model& model, const std::vector<SceneExpression>& exprs) {
  ExpressionSet out;
  for (const auto& e : exprs) out.push_back(toy_text_encoder(e.tokens, model.text));
  return out;
}

/// Inference over a clip. Single mode runs the whole network once per expression; multi
/// mode shares the visual encoder, fusion and transformer encoder across expressions.
inline std::vector<ExpressionPrediction> run_pipeline(const Model& model, const std::vector<Tensor>& frames,
                                                      const std::vector<SceneExpression>& expressions, Mode mode,
                                                      PipelineCounters* counters = nullptr) {
  if (expressions.empty()) throw EmptyContextError("run_pipeline: no expressions");
  NoGradGuard no_grad;
  const ExpressionSet exprs = encode_expressions(model, expressions);
  std::vector<ExpressionPrediction> out;
  if (mode == Mode::single) {
    for (const auto& e : exprs) {
      const auto visual = encode_visual(model, frames, counters);
      const auto encoded = fuse_and_encode(model, visual, {e}, Mode::single, counters);
      out.push_back(predict_expression(model, visual, decode_expression(model, encoded, e, counters)));
    }
    return out;
  }
  const auto visual = encode_visual(model, frames, counters);
  const auto encoded = fuse_and_encode(model, visual, exprs, Mode::multi, counters);
  for (const auto& e : exprs) out.push_back(predict_expression(model, visual, decode_expression(model, encoded, e, counters)));
  return out;
}

inline std::vector<ExpressionPrediction> run_pipeline(const Model& model, const SceneSpec& scene, Mode mode,
                                                      PipelineCounters* counters = nullptr) {
  return run_pipeline(model, scene.frames, scene.expressions, mode, counters);
}

inline std::vector<GroundTruthFrame> ground_truth(const SceneSpec& scene, std::size_t expression) {
  std::vector<GroundTruthFrame> out;
  for (std::size_t t = 0; t < scene.frames.size(); ++t) {
    const auto& m = scene.masks.at(expression).at(t);
    out.push_back({m.to_tensor(), scene.boxes[expression][t], m.area() > 0});
  }
  return out;
}

/// Query outputs with patch masks resized to ground-truth resolution, as used for matching.
inline std::vector<FrameOutputs> frame_outputs(const ExpressionHeads& heads) {
  std::vector<FrameOutputs> out;
  for (std::size_t t = 0; t < heads.patch_masks.size(); ++t) {
    std::vector<Tensor> full;
    for (const auto& m : heads.patch_masks[t]) full.push_back(upsample_masks(m));
    out.push_back({stack0(full), heads.boxes[t], heads.score_logits[t]});
  }
  return out;
}

struct SceneLoss {
  Tensor loss;                       // mean over expressions
  std::vector<std::size_t> matched;  // per expression
};

/// Training objective on one scene. The visual encoder runs once; fusion follows `mode`.
inline SceneLoss scene_loss(const Model& model, const SceneSpec& scene, const LossWeights& weights,
                            Mode mode = Mode::single, PipelineCounters* counters = nullptr) {
  const ExpressionSet exprs = encode_expressions(model, scene.expressions);
  if (exprs.empty()) throw EmptyContextError("scene_loss: scene has no expressions");
  const auto visual = encode_visual(model, scene.frames, counters);
  std::vector<Tensor> shared;
  if (mode == Mode::multi) shared = fuse_and_encode(model, visual, exprs, Mode::multi, counters);

  SceneLoss out;
  std::vector<Tensor> terms;
  for (std::size_t e = 0; e < exprs.size(); ++e) {
    const auto encoded = mode == Mode::multi ? shared : fuse_and_encode(model, visual, {exprs[e]}, Mode::single, counters);
    const ExpressionHeads heads = decode_expression(model, encoded, exprs[e], counters);
    const auto outputs = frame_outputs(heads);
    const auto truth = ground_truth(scene, e);
    const std::size_t q = match_query(outputs, truth, weights);
    std::vector<Tensor> refined;
    for (std::size_t t = 0; t < visual.size(); ++t) refined.push_back(refine_mask(model, heads.patch_masks[t][q], visual[t]));
    terms.push_back(reshape(total_loss(outputs, refined, q, truth, weights), {1}));
    out.matched.push_back(q);
  }
  out.loss = scale(sum_all(concat0(terms)), 1.0 / static_cast<double>(terms.size()));
  return out;
}

}  // namespace rvos
