#pragma once

#include <cmath>
#include <random>
#include <string>

#include "rvos/ops.hpp"
#include "rvos/params.hpp"
#include "rvos/patch_segmentation.hpp"

namespace rvos {

struct MSOStageParams {
  Tensor proj_weight;      // [d_low, p^2 + C_s]
  Tensor proj_bias;        // [d_low]
  Tensor residual_weight;  // [p^2, d_low]
  Tensor residual_bias;    // [p^2]
};

struct MSOParams {
  MSOStageParams stride8;
  MSOStageParams stride4;
};

inline MSOStageParams make_mso_stage(ParamStore& store, const std::string& prefix, std::size_t labels,
                                     std::size_t feature_dim, std::size_t low_dim, std::mt19937_64& rng) {
  MSOStageParams p;
  const std::size_t in = labels + feature_dim;
  p.proj_weight = store.uniform(prefix + ".proj_weight", {low_dim, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  p.proj_bias = store.zeros(prefix + ".proj_bias", {low_dim});
  p.residual_weight = store.uniform(prefix + ".residual_weight", {labels, low_dim},
                                    0.1 / std::sqrt(static_cast<double>(low_dim)), rng);
  p.residual_bias = store.zeros(prefix + ".residual_bias", {labels});
  return p;
}

inline MSOParams make_mso_params(ParamStore& store, const std::string& prefix, std::size_t labels,
                                 std::size_t feature_dim, std::size_t low_dim, std::mt19937_64& rng) {
  return {make_mso_stage(store, prefix + ".s8", labels, feature_dim, low_dim, rng),
          make_mso_stage(store, prefix + ".s4", labels, feature_dim, low_dim, rng)};
}

/// One refinement step: upsample the patch mask x2, then add a residual predicted from the
/// concatenation of the upsampled mask and the visual features at the new stride.
inline Tensor mso_stage(const Tensor& mask, const Tensor& visual, const MSOStageParams& p) {
  detail::require_rank(mask, 3, "mso_stage");
  detail::require_rank(visual, 3, "mso_stage");
  if (visual.dim(1) != 2 * mask.dim(1) || visual.dim(2) != 2 * mask.dim(2)) {
    throw ShapeError("mso_stage: features " + shape_str(visual.shape()) + " are not at twice the resolution of mask " +
                     shape_str(mask.shape()));
  }
  const Tensor up = resize_bilinear(mask, 2);
  const Tensor bases = relu(conv1x1(concat0({up, visual}), p.proj_weight, p.proj_bias));
  return add(up, conv1x1(bases, p.residual_weight, p.residual_bias));
}

/// Stride-16 patch mask -> full-resolution logits [H, W] via the stride-8 and stride-4 stages.
inline Tensor optimize_masks(const Tensor& mask, const Tensor& visual8, const Tensor& visual4, const MSOParams& p,
                             std::size_t patch = 4) {
  if (patch != 4) throw ConfigError("optimize_masks: the stride 16 -> 4 layout requires patch size 4");
  if (mask.dim(0) != patch * patch) throw ConfigError("optimize_masks: mask does not carry 4x4 patches");
  return flatten_patches(mso_stage(mso_stage(mask, visual8, p.stride8), visual4, p.stride4));
}

/// The refinement-free path: two bilinear x2 steps, then flatten.
inline Tensor upsample_masks(const Tensor& mask) {
  return flatten_patches(resize_bilinear(resize_bilinear(mask, 2), 2));
}

}  // namespace rvos
