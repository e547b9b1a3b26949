#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rvos/multi_object.hpp"
#include "rvos/ops.hpp"
#include "rvos/params.hpp"

namespace rvos {

struct VocabularyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Four strided point-wise stages: space_to_depth(4) then three space_to_depth(2), each
/// followed by a 1x1 projection to `dim` and ReLU.
struct VisualEncoderParams {
  std::vector<Tensor> weights;  // [C, 48], then [C, 4C] x3
  std::vector<Tensor> biases;   // [C] x4
};

struct VisualFeatures {
  Tensor s4, s8, s16, s32;  // [C, H/s, W/s]
};

inline VisualEncoderParams make_visual_encoder(ParamStore& store, const std::string& prefix, std::size_t dim,
                                               std::mt19937_64& rng) {
  VisualEncoderParams p;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t in = stage == 0 ? 3 * 16 : 4 * dim;
    const std::string name = prefix + ".stage" + std::to_string(stage);
    p.weights.push_back(store.uniform(name + ".weight", {dim, in}, std::sqrt(6.0 / static_cast<double>(in)), rng));
    p.biases.push_back(store.zeros(name + ".bias", {dim}));
  }
  return p;
}

/// One RGB frame [3,H,W] -> features at strides 4, 8, 16, 32.
inline VisualFeatures toy_visual_encoder(const Tensor& frame, const VisualEncoderParams& p) {
  detail::require_rank(frame, 3, "toy_visual_encoder");
  if (frame.dim(0) != 3) throw ShapeError("toy_visual_encoder: expected 3 colour channels");
  if (frame.dim(1) % 32 || frame.dim(2) % 32 || frame.dim(1) == 0 || frame.dim(2) == 0) {
    throw ShapeError("toy_visual_encoder: frame " + shape_str(frame.shape()) + " is not divisible by 32");
  }
  VisualFeatures f;
  f.s4 = relu(conv1x1(space_to_depth(frame, 4), p.weights[0], p.biases[0]));
  f.s8 = relu(conv1x1(space_to_depth(f.s4, 2), p.weights[1], p.biases[1]));
  f.s16 = relu(conv1x1(space_to_depth(f.s8, 2), p.weights[2], p.biases[2]));
  f.s32 = relu(conv1x1(space_to_depth(f.s16, 2), p.weights[3], p.biases[3]));
  return f;
}

struct TextEncoderParams {
  Tensor embedding;  // [V, C]
};

inline TextEncoderParams make_text_encoder(ParamStore& store, const std::string& prefix, std::size_t vocab_size,
                                           std::size_t dim, std::mt19937_64& rng) {
  return {store.normal(prefix + ".embedding", {vocab_size, dim}, 1.0, rng)};
}

/// Embedding lookup for the words; the sentence feature is their mean.
inline Expression toy_text_encoder(const std::vector<int>& tokens, const TextEncoderParams& p) {
  if (tokens.empty()) throw VocabularyError("toy_text_encoder: empty expression");
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= p.embedding.dim(0)) {
      throw VocabularyError("toy_text_encoder: unknown token id " + std::to_string(t));
    }
    ids.push_back(static_cast<std::size_t>(t));
  }
  Expression e;
  e.words = gather_rows(p.embedding, ids);
  e.sentence = reshape(mean_rows(e.words), {p.embedding.dim(1)});
  return e;
}

}  // namespace rvos
