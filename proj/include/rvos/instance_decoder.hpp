#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rvos/attention.hpp"
#include "rvos/ops.hpp"
#include "rvos/params.hpp"

namespace rvos {

struct TransformerLayerParams {
  AttentionParams attention;
  FeedForwardParams ffn;
};

/// Encoder/decoder stand-in plus the per-query heads.
struct EncoderParams {
  std::vector<TransformerLayerParams> encoder;  // self-attention layers over feature tokens
  std::vector<TransformerLayerParams> decoder;  // query -> token cross-attention layers
  Tensor query_embed;                           // [N, C] learnable instance embeddings
  Tensor score_weight, score_bias;              // [1, C], [1]
  FeedForwardParams box_head;                   // C -> C -> 4
};

inline EncoderParams make_encoder_params(ParamStore& store, const std::string& prefix, std::size_t dim,
                                         std::size_t enc_layers, std::size_t dec_layers, std::size_t num_queries,
                                         std::mt19937_64& rng) {
  EncoderParams p;
  for (std::size_t l = 0; l < enc_layers; ++l) {
    const std::string name = prefix + ".enc" + std::to_string(l);
    p.encoder.push_back({make_attention_params(store, name + ".attention", dim, rng, 0.5),
                         make_feed_forward(store, name + ".ffn", dim, 2 * dim, dim, rng, 0.5)});
  }
  for (std::size_t l = 0; l < dec_layers; ++l) {
    const std::string name = prefix + ".dec" + std::to_string(l);
    p.decoder.push_back({make_attention_params(store, name + ".attention", dim, rng),
                         make_feed_forward(store, name + ".ffn", dim, 2 * dim, dim, rng, 0.5)});
  }
  p.query_embed = store.normal(prefix + ".query_embed", {num_queries, dim}, 1.0, rng);
  p.score_weight = store.uniform(prefix + ".score_weight", {1, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  p.score_bias = store.zeros(prefix + ".score_bias", {1});
  p.box_head = make_feed_forward(store, prefix + ".box", dim, dim, 4, rng);
  return p;
}

/// Sinusoidal 2D encoding [H*W, C]: the first C/2 channels encode the row, the rest the column.
inline Tensor sine_position_encoding(std::size_t h, std::size_t w, std::size_t dim) {
  std::vector<double> out(h * w * dim, 0.0);
  const std::size_t half = dim / 2;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double* row = out.data() + (y * w + x) * dim;
      for (std::size_t axis = 0; axis < 2; ++axis) {
        const double pos = static_cast<double>(axis == 0 ? y : x) + 0.5;
        const std::size_t width = axis == 0 ? half : dim - half;
        for (std::size_t i = 0; i < width; ++i) {
          const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
          row[axis * half + i] = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
        }
      }
    }
  return Tensor({h * w, dim}, std::move(out));
}

/// Token self-attention + MLP with residual connections over one frame's feature map.
/// Positional terms (when given, [HW,C]) only enter queries and keys.
inline Tensor encode_tokens(const Tensor& tokens, const EncoderParams& p, const Tensor* pos = nullptr) {
  Tensor x = tokens;
  for (const auto& layer : p.encoder) {
    x = add(x, cross_attention(x, x, layer.attention, pos, pos));
    x = add(x, feed_forward(x, layer.ffn));
  }
  return x;
}

inline Tensor encode_features(const Tensor& features, const EncoderParams& p, bool use_position = true) {
  detail::require_rank(features, 3, "encode_features");
  const std::size_t h = features.dim(1), w = features.dim(2);
  const Tensor pos = sine_position_encoding(h, w, features.dim(0));
  return map_from_tokens(encode_tokens(tokens_from_map(features), p, use_position ? &pos : nullptr), h, w);
}

/// Q[i] = learned[i] + sentence.
inline Tensor build_queries(const Tensor& sentence, const Tensor& learned) {
  detail::require_rank(learned, 2, "build_queries");
  return add_row_bias(learned, sentence);
}

/// Stacked query -> token cross-attention layers for one frame: [N,C] x [HW,C] -> [N,C].
inline Tensor decode_embeddings(const Tensor& queries, const Tensor& tokens, const EncoderParams& p,
                                const Tensor* key_pos = nullptr) {
  Tensor q = queries;
  for (const auto& layer : p.decoder) {
    q = add(q, cross_attention(q, tokens, layer.attention, nullptr, key_pos));
    q = add(q, feed_forward(q, layer.ffn));
  }
  return q;
}

/// Decodes every frame and stacks the result into [T, N, C].
inline Tensor decode_clip(const Tensor& queries, const std::vector<Tensor>& frame_tokens, const EncoderParams& p,
                          const Tensor* key_pos = nullptr) {
  std::vector<Tensor> frames;
  frames.reserve(frame_tokens.size());
  for (const auto& tokens : frame_tokens) frames.push_back(decode_embeddings(queries, tokens, p, key_pos));
  return stack0(frames);
}

/// Confidence logits [N] for embeddings [N,C].
inline Tensor score_logits(const Tensor& embeddings, const EncoderParams& p) {
  return reshape(linear(embeddings, p.score_weight, p.score_bias), {embeddings.dim(0)});
}

/// sigmoid(linear(E)) for [N,C] or [T,N,C] embeddings.
inline Tensor predict_scores(const Tensor& embeddings, const EncoderParams& p) {
  if (embeddings.rank() == 3) {
    const std::size_t t = embeddings.dim(0), n = embeddings.dim(1), c = embeddings.dim(2);
    return reshape(sigmoid(linear(reshape(embeddings, {t * n, c}), p.score_weight, p.score_bias)), {t, n});
  }
  return sigmoid(score_logits(embeddings, p));
}

/// Normalized (cx, cy, w, h) boxes: sigmoid(MLP(E)), [N,4] or [T,N,4].
inline Tensor predict_boxes(const Tensor& embeddings, const EncoderParams& p) {
  if (embeddings.rank() == 3) {
    const std::size_t t = embeddings.dim(0), n = embeddings.dim(1), c = embeddings.dim(2);
    return reshape(sigmoid(feed_forward(reshape(embeddings, {t * n, c}), p.box_head)), {t, n, 4});
  }
  return sigmoid(feed_forward(embeddings, p.box_head));
}

using Box = std::array<double, 4>;

inline Box cxcywh_to_xyxy(const Box& b) {
  return {b[0] - 0.5 * b[2], b[1] - 0.5 * b[3], b[0] + 0.5 * b[2], b[1] + 0.5 * b[3]};
}

inline Box xyxy_to_cxcywh(const Box& b) {
  return {0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3]), b[2] - b[0], b[3] - b[1]};
}

}  // namespace rvos
