#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rvos/attention.hpp"
#include "rvos/ops.hpp"
#include "rvos/params.hpp"

namespace rvos {

struct CPKConfig {
  std::size_t dim = 32;
  std::size_t hidden = 16;
  std::size_t patch = 4;

  std::size_t labels() const { return patch * patch; }

  /// hidden*C + hidden + hidden*p^2 + p^2 values per kernel.
  std::size_t kernel_size() const { return hidden * dim + hidden + hidden * labels() + labels(); }
};

/// Dynamic two-layer point-wise convolution, sliced from one flat kernel vector.
/// Layout of the flat vector: W1 [hidden, C] | b1 [hidden] | W2 [p^2, hidden] | b2 [p^2].
struct KernelParams {
  Tensor w1, b1, w2, b2;
  std::size_t patch = 4;
};

struct CPKHeadParams {
  AttentionParams attention;
  Tensor fc_weight;  // [kernel_size, C]
  Tensor fc_bias;    // [kernel_size]
};

inline CPKHeadParams make_cpk_head(ParamStore& store, const std::string& prefix, const CPKConfig& cfg,
                                   std::mt19937_64& rng) {
  CPKHeadParams p;
  p.attention = make_attention_params(store, prefix + ".attention", cfg.dim, rng);
  p.fc_weight = store.uniform(prefix + ".fc_weight", {cfg.kernel_size(), cfg.dim},
                              0.5 / std::sqrt(static_cast<double>(cfg.dim)), rng);
  p.fc_bias = store.zeros(prefix + ".fc_bias", {cfg.kernel_size()});
  return p;
}

inline KernelParams split_kernel(const Tensor& flat, const CPKConfig& cfg) {
  if (flat.numel() != cfg.kernel_size()) {
    throw ConfigError("split_kernel: kernel vector has " + std::to_string(flat.numel()) + " values, expected " +
                      std::to_string(cfg.kernel_size()));
  }
  const Tensor v = reshape(flat, {flat.numel()});
  const std::size_t c = cfg.dim, hid = cfg.hidden, l = cfg.labels();
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    Tensor part = slice0(v, at, at + n);
    at += n;
    return part;
  };
  KernelParams k;
  k.w1 = reshape(take(hid * c), {hid, c});
  k.b1 = take(hid);
  k.w2 = reshape(take(l * hid), {l, hid});
  k.b2 = take(l);
  k.patch = cfg.patch;
  return k;
}

/// FC(Att(Q, F_vl)) for every query row: returns flat kernels [N, kernel_size].
inline Tensor predict_kernel_vectors(const Tensor& queries, const Tensor& tokens, const CPKHeadParams& head,
                                     const CPKConfig& cfg) {
  if (head.fc_weight.rank() != 2 || head.fc_weight.dim(0) != cfg.kernel_size() || head.fc_weight.dim(1) != cfg.dim) {
    throw ConfigError("predict_cpk: FC weight " + shape_str(head.fc_weight.shape()) + " does not produce kernels of " +
                      std::to_string(cfg.kernel_size()) + " values from width " + std::to_string(cfg.dim));
  }
  return linear(cross_attention(queries, tokens, head.attention), head.fc_weight, head.fc_bias);
}

inline std::vector<KernelParams> predict_cpk(const Tensor& queries, const Tensor& tokens, const CPKHeadParams& head,
                                             const CPKConfig& cfg) {
  const Tensor flat = predict_kernel_vectors(queries, tokens, head, cfg);
  std::vector<KernelParams> kernels;
  kernels.reserve(flat.dim(0));
  for (std::size_t n = 0; n < flat.dim(0); ++n) kernels.push_back(split_kernel(select0(flat, n), cfg));
  return kernels;
}

/// conv1x1(relu(conv1x1(F_vl, W1, b1)), W2, b2): patch-mask logits [p^2, h, w].
inline Tensor apply_cpk(const KernelParams& k, const Tensor& features) {
  detail::require_rank(features, 3, "apply_cpk");
  if (k.w1.dim(1) != features.dim(0)) {
    throw ShapeError("apply_cpk: kernel expects " + std::to_string(k.w1.dim(1)) + " channels, features have " +
                     std::to_string(features.dim(0)));
  }
  return conv1x1(relu(conv1x1(features, k.w1, k.b1)), k.w2, k.b2);
}

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::size_t patch_side(std::size_t channels) {
  const auto p = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(channels))));
  if (p == 0 || p * p != channels) {
    throw FormatError("patch mask channel count " + std::to_string(channels) + " is not a perfect square");
  }
  return p;
}

/// [p^2, h, w] -> [h*p, w*p]. Channel dy*p + dx of token (y,x) lands on pixel (y*p+dy, x*p+dx).
inline Tensor flatten_patches(const Tensor& mask) {
  detail::require_rank(mask, 3, "flatten_patches");
  const std::size_t p = patch_side(mask.dim(0));
  const Tensor plane = depth_to_space(mask, p);
  return reshape(plane, {plane.dim(1), plane.dim(2)});
}

/// [h*p, w*p] -> [p^2, h, w].
inline Tensor unflatten_patches(const Tensor& plane, std::size_t patch) {
  detail::require_rank(plane, 2, "unflatten_patches");
  return space_to_depth(reshape(plane, {1, plane.dim(0), plane.dim(1)}), patch);
}

}  // namespace rvos
