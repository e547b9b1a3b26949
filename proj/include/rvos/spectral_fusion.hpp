#pragma once

#include <cmath>
#include <random>
#include <string>

#include "rvos/attention.hpp"
#include "rvos/fft.hpp"
#include "rvos/ops.hpp"
#include "rvos/params.hpp"

namespace rvos {

/// Parameters of one spectrum augmentation block.
struct SAParams {
  Tensor conv_weight;   // [2C, 2C] over stacked (real | imag) channels
  Tensor conv_bias;     // [2C]
  Tensor scale_weight;  // [1, C] linear head on mean-pooled features
  Tensor scale_bias;    // [1]
};

struct SCFParams {
  SAParams pre;
  SAParams post;
  AttentionParams attention;
};

/// Low-pass filter over the DFT grid. `values` is differentiable through the predicted scale.
struct FilterMap {
  Tensor values;  // [H, W]
  double bandwidth = 0.0;
  double scale = 0.0;
};

// softplus^-1(1): the scale predictor starts at s = 1.
inline constexpr double kUnitScaleBias = 0.54132485461291810;

inline SAParams make_sa_params(ParamStore& store, const std::string& prefix, std::size_t dim, std::mt19937_64& rng,
                               double conv_std = 0.02) {
  SAParams p;
  p.conv_weight = store.normal(prefix + ".conv_weight", {2 * dim, 2 * dim}, conv_std, rng);
  p.conv_bias = store.zeros(prefix + ".conv_bias", {2 * dim});
  p.scale_weight = store.uniform(prefix + ".scale_weight", {1, dim}, 0.1 / std::sqrt(static_cast<double>(dim)), rng);
  p.scale_bias = store.constant(prefix + ".scale_bias", {1}, kUnitScaleBias);
  return p;
}

inline SCFParams make_scf_params(ParamStore& store, const std::string& prefix, std::size_t dim, std::mt19937_64& rng) {
  SCFParams p;
  p.pre = make_sa_params(store, prefix + ".pre", dim, rng);
  p.post = make_sa_params(store, prefix + ".post", dim, rng);
  p.attention = make_attention_params(store, prefix + ".attention", dim, rng);
  return p;
}

/// Distance of DFT bin (u,v) from DC in cycles per sample, using the wrapped frequency
/// min(u, H-u)/H per axis. Ranges over [0, sqrt(2)/2].
inline double normalized_frequency_radius(std::size_t u, std::size_t v, std::size_t h, std::size_t w) {
  const double fu = static_cast<double>(std::min(u, h - u)) / static_cast<double>(h);
  const double fv = static_cast<double>(std::min(v, w - v)) / static_cast<double>(w);
  return std::sqrt(fu * fu + fv * fv);
}

/// G(u,v) = exp(-d^2 / (2 (s K)^2)) for a scalar scale tensor s of shape [1].
inline Tensor gaussian_map(const Tensor& scale_value, double bandwidth, std::size_t h, std::size_t w) {
  if (scale_value.numel() != 1) throw ShapeError("gaussian_map: scale must hold one value");
  const double s = scale_value[0];
  const double width = s * bandwidth;
  std::vector<double> d2(h * w), out(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      const double d = normalized_frequency_radius(u, v, h, w);
      d2[u * w + v] = d * d;
      out[u * w + v] = d == 0.0 ? 1.0 : std::exp(-d * d / (2.0 * width * width));
    }
  return detail::make_result({h, w}, out, {scale_value}, [scale_value, d2, out, s, bandwidth](const std::vector<double>& g) {
    auto* gs = detail::grad_of(scale_value);
    if (!gs) return;
    // dG/ds = G * d^2 / (K^2 s^3)
    const double k = 1.0 / (bandwidth * bandwidth * s * s * s);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * out[i] * d2[i] * k;
    (*gs)[0] += acc;
  }, "gaussian_map");
}

/// Predicts s = softplus(linear(mean_pool(F))) and builds the Gaussian low-pass map.
inline FilterMap make_gaussian_lowpass(double bandwidth, const Tensor& features, const SAParams& p) {
  if (!(bandwidth > 0.0)) throw ConfigError("make_gaussian_lowpass: bandwidth must be positive");
  detail::require_rank(features, 3, "make_gaussian_lowpass");
  const std::size_t c = features.dim(0);
  const Tensor pooled = reshape(mean_per_channel(features), {1, c});
  const Tensor s = reshape(softplus(linear(pooled, p.scale_weight, p.scale_bias)), {1});
  return FilterMap{gaussian_map(s, bandwidth, features.dim(1), features.dim(2)), bandwidth, s[0]};
}

/// F + Re(IFFT(Conv(G * FFT(F)))) with a caller-supplied filter.
inline Tensor spectrum_augment(const Tensor& features, const FilterMap& filter, const SAParams& p) {
  detail::require_rank(features, 3, "spectrum_augment");
  const Tensor spectrum = spectral_forward(features);
  const Tensor filtered = mul_plane(spectrum, filter.values);
  const Tensor mixed = conv1x1(filtered, p.conv_weight, p.conv_bias);
  return add(features, spectral_inverse_real(mixed));
}

/// Spectrum augmentation with the input-adaptive Gaussian filter.
inline Tensor spectrum_augment(const Tensor& features, double bandwidth, const SAParams& p) {
  return spectrum_augment(features, make_gaussian_lowpass(bandwidth, features, p), p);
}

/// SA_post(SA_pre(F_v) * context(SA_pre(F_v))), where `context` maps the [HW,C] tokens of
/// the pre-augmented map to an equally shaped [HW,C] tensor and * is the Hadamard product.
template <typename ContextFn>
Tensor spectral_modulate(const Tensor& visual, double bandwidth, const SCFParams& p, ContextFn&& context) {
  detail::require_rank(visual, 3, "spectral_modulate");
  const std::size_t h = visual.dim(1), w = visual.dim(2);
  const Tensor enhanced = spectrum_augment(visual, bandwidth, p.pre);
  const Tensor tokens = tokens_from_map(enhanced);
  const Tensor gate = context(tokens);
  const Tensor fused = map_from_tokens(mul(tokens, gate), h, w);
  return spectrum_augment(fused, bandwidth, p.post);
}

/// Spectrum-guided cross-modal fusion of word features [Nw,C] into a visual map [C,H,W].
inline Tensor scf(const Tensor& words, const Tensor& visual, const SCFParams& p, double bandwidth = 0.25) {
  return spectral_modulate(visual, bandwidth, p,
                           [&](const Tensor& tokens) { return cross_attention(tokens, words, p.attention); });
}

/// Plain cross-attention fusion used when spectral augmentation is disabled.
inline Tensor attention_fusion(const Tensor& words, const Tensor& visual, const AttentionParams& attention) {
  const Tensor tokens = tokens_from_map(visual);
  return map_from_tokens(mul(tokens, cross_attention(tokens, words, attention)), visual.dim(1), visual.dim(2));
}

}  // namespace rvos
