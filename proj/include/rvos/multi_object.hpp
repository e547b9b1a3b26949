#pragma once

#include <vector>

#include "rvos/attention.hpp"
#include "rvos/instance_decoder.hpp"
#include "rvos/spectral_fusion.hpp"

namespace rvos {

/// Word features [Nw, C] and sentence feature [C] of one referring expression.
struct Expression {
  Tensor words;
  Tensor sentence;
};

using ExpressionSet = std::vector<Expression>;

/// Sum over expressions of Att(visual tokens, words_e) with shared attention weights: [HW, C].
inline Tensor semantic_fusion(const ExpressionSet& exprs, const Tensor& visual_tokens, const AttentionParams& p) {
  if (exprs.empty()) throw EmptyContextError("semantic_fusion: expression set is empty");
  std::vector<Tensor> terms;
  terms.reserve(exprs.size());
  for (const auto& e : exprs) terms.push_back(cross_attention(visual_tokens, e.words, p));
  return sum_stack(terms);
}

/// SA_post(SA_pre(F_v) * SF(exprs, SA_pre(F_v))): one fused map shared by every expression.
inline Tensor multi_instance_fusion(const ExpressionSet& exprs, const Tensor& visual, const SCFParams& p,
                                    double bandwidth = 0.25) {
  if (exprs.empty()) throw EmptyContextError("multi_instance_fusion: expression set is empty");
  return spectral_modulate(visual, bandwidth, p,
                           [&](const Tensor& tokens) { return semantic_fusion(exprs, tokens, p.attention); });
}

struct DecoupledInstance {
  std::vector<Tensor> features;  // per frame, instance-specific [C, h, w]
  Tensor embeddings;             // [T, N, C]
};

/// Gates the shared encoded features of each frame by Att(tokens, words) and decodes the
/// expression's instance queries against the gated tokens.
inline DecoupledInstance decouple_instances(const std::vector<Tensor>& shared, const Expression& expr,
                                            const AttentionParams& gate, const EncoderParams& decoder,
                                            const Tensor* key_pos = nullptr) {
  if (shared.empty()) throw ShapeError("decouple_instances: no frames");
  const Tensor queries = build_queries(expr.sentence, decoder.query_embed);
  DecoupledInstance out;
  std::vector<Tensor> per_frame;
  for (const auto& frame : shared) {
    detail::require_rank(frame, 3, "decouple_instances");
    const Tensor tokens = tokens_from_map(frame);
    const Tensor gated = mul(tokens, cross_attention(tokens, expr.words, gate));
    out.features.push_back(map_from_tokens(gated, frame.dim(1), frame.dim(2)));
    per_frame.push_back(decode_embeddings(queries, gated, decoder, key_pos));
  }
  out.embeddings = stack0(per_frame);
  return out;
}

}  // namespace rvos
