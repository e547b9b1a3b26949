#pragma once

#include <cmath>
#include <random>
#include <string>

#include "rvos/ops.hpp"
#include "rvos/params.hpp"

namespace rvos {

struct EmptyContextError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Single-head projections, each [C,C] and applied as x * W^T.
struct AttentionParams {
  Tensor query;
  Tensor key;
  Tensor value;
};

inline AttentionParams make_attention_params(ParamStore& store, const std::string& prefix, std::size_t dim,
                                             std::mt19937_64& rng, double value_gain = 1.0) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  AttentionParams p;
  p.query = store.uniform(prefix + ".query", {dim, dim}, bound, rng);
  p.key = store.uniform(prefix + ".key", {dim, dim}, bound, rng);
  p.value = store.uniform(prefix + ".value", {dim, dim}, bound * value_gain, rng);
  return p;
}

/// softmax(Q Wq (KV Wk)^T / sqrt(C)) * (KV Wv).
///
/// Optional positional terms are added to the query and key inputs only, so the values
/// (and therefore residual identities) are unaffected by them.
inline Tensor cross_attention(const Tensor& queries, const Tensor& context, const AttentionParams& p,
                              const Tensor* query_pos = nullptr, const Tensor* key_pos = nullptr) {
  detail::require_rank(queries, 2, "cross_attention");
  detail::require_rank(context, 2, "cross_attention");
  if (context.dim(0) == 0) throw EmptyContextError("cross_attention: context has no rows");
  if (queries.dim(1) != context.dim(1)) {
    throw ShapeError("cross_attention: width mismatch " + shape_str(queries.shape()) + " vs " +
                     shape_str(context.shape()));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(queries.dim(1)));
  const Tensor q_in = query_pos ? add(queries, *query_pos) : queries;
  const Tensor k_in = key_pos ? add(context, *key_pos) : context;
  const Tensor q = linear(q_in, p.query);
  const Tensor k = linear(k_in, p.key);
  const Tensor v = linear(context, p.value);
  const Tensor weights = softmax_rows(scale(matmul_nt(q, k), inv_sqrt));
  return matmul(weights, v);
}

/// Two-layer MLP with ReLU: W2 relu(W1 x + b1) + b2.
struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

inline FeedForwardParams make_feed_forward(ParamStore& store, const std::string& prefix, std::size_t in,
                                           std::size_t hidden, std::size_t out, std::mt19937_64& rng,
                                           double out_gain = 1.0) {
  FeedForwardParams p;
  p.w1 = store.uniform(prefix + ".w1", {hidden, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  p.b1 = store.zeros(prefix + ".b1", {hidden});
  p.w2 = store.uniform(prefix + ".w2", {out, hidden}, out_gain / std::sqrt(static_cast<double>(hidden)), rng);
  p.b2 = store.zeros(prefix + ".b2", {out});
  return p;
}

inline Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  return linear(relu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

}  // namespace rvos
