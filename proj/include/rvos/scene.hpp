#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rvos/instance_decoder.hpp"
#include "rvos/metrics.hpp"
#include "rvos/tensor.hpp"

namespace rvos {

enum class ShapeKind { circle = 0, square = 1, triangle = 2 };

/// Token vocabulary of the synthetic expressions.
namespace vocab {
inline constexpr int the = 0;
inline constexpr int first_color = 1;   // red, green, blue, yellow
inline constexpr int first_shape = 5;   // circle, square, triangle
inline constexpr int size = 8;
inline constexpr int num_colors = 4;
inline constexpr int num_shapes = 3;

inline const char* word(int token) {
  static constexpr const char* words[size] = {"the", "red", "green", "blue", "yellow", "circle", "square", "triangle"};
  if (token < 0 || token >= size) throw ConfigError("vocab: unknown token id " + std::to_string(token));
  return words[token];
}
}  // namespace vocab

inline constexpr std::array<std::array<double, 3>, vocab::num_colors> kPalette{{
    {1.00, 0.15, 0.10},
    {0.10, 0.85, 0.20},
    {0.15, 0.30, 1.00},
    {1.00, 0.90, 0.10},
}};

struct SceneObject {
  ShapeKind shape = ShapeKind::circle;
  int color = 0;
  double size = 8.0;  // radius / half side, pixels
  double x = 0.0, y = 0.0;    // center on frame 0, pixels
  double vx = 0.0, vy = 0.0;  // pixels per frame
};

struct SceneExpression {
  std::vector<int> tokens;
  std::size_t object = 0;

  std::string text() const {
    std::string s;
    for (int t : tokens) s += (s.empty() ? "" : " ") + std::string(vocab::word(t));
    return s;
  }
};

struct SceneKnobs {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t frames = 3;
  std::size_t objects = 2;
  std::size_t expressions = 2;
  double min_size = 6.0;
  double max_size = 11.0;
  double max_speed = 3.0;
  double noise = 0.0;
  int gap = 2;  // minimum pixel gap between objects
};

/// A rendered synthetic video with its referring expressions and ground truth.
struct SceneSpec {
  std::uint64_t seed = 0;
  SceneKnobs knobs;
  std::vector<SceneObject> objects;
  std::vector<SceneExpression> expressions;
  std::vector<Tensor> frames;                     // [3, H, W] in [0, 1]
  std::vector<std::vector<BinaryMask>> masks;     // [expression][frame]
  std::vector<std::vector<Box>> boxes;            // [expression][frame], normalized cxcywh

  std::string name() const { return "scene_" + std::to_string(seed); }
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline BinaryMask rasterize(const SceneObject& obj, std::size_t frame, std::size_t h, std::size_t w) {
  BinaryMask m(h, w);
  const double cx = obj.x + obj.vx * static_cast<double>(frame);
  const double cy = obj.y + obj.vy * static_cast<double>(frame);
  const double r = obj.size;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5 - cx, py = static_cast<double>(y) + 0.5 - cy;
      bool inside = false;
      switch (obj.shape) {
        case ShapeKind::circle:
          inside = px * px + py * py <= r * r;
          break;
        case ShapeKind::square:
          inside = std::abs(px) <= r && std::abs(py) <= r;
          break;
        case ShapeKind::triangle: {
          const double t = (py + r) / (2.0 * r);
          inside = t >= 0.0 && t <= 1.0 && std::abs(px) <= r * t;
          break;
        }
      }
      m(y, x) = inside ? 1 : 0;
    }
  return m;
}

/// Tight normalized (cx, cy, w, h) box of a non-empty mask.
inline Box box_from_mask(const BinaryMask& m) {
  std::size_t x0 = m.width, y0 = m.height, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m(y, x)) {
        any = true;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x + 1);
        y1 = std::max(y1, y + 1);
      }
  if (!any) return {0.0, 0.0, 0.0, 0.0};
  const double w = static_cast<double>(m.width), h = static_cast<double>(m.height);
  return xyxy_to_cxcywh({static_cast<double>(x0) / w, static_cast<double>(y0) / h, static_cast<double>(x1) / w,
                         static_cast<double>(y1) / h});
}

namespace detail {

inline bool masks_too_close(const BinaryMask& a, const BinaryMask& b, int gap) {
  const int h = static_cast<int>(a.height), w = static_cast<int>(a.width);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!a(y, x)) continue;
      for (int dy = -gap; dy <= gap; ++dy)
        for (int dx = -gap; dx <= gap; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && b(yy, xx)) return true;
        }
    }
  return false;
}

inline bool try_place(SceneObject& obj, const SceneKnobs& k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> speed(-k.max_speed, k.max_speed);
  obj.vx = std::round(speed(rng));
  obj.vy = std::round(speed(rng));
  const double span = static_cast<double>(k.frames - 1);
  const double margin = obj.size + 1.0;
  const double lox = margin - std::min(0.0, obj.vx * span), hix = static_cast<double>(k.width) - margin - std::max(0.0, obj.vx * span);
  const double loy = margin - std::min(0.0, obj.vy * span), hiy = static_cast<double>(k.height) - margin - std::max(0.0, obj.vy * span);
  if (lox > hix || loy > hiy) return false;
  obj.x = std::uniform_real_distribution<double>(lox, hix)(rng);
  obj.y = std::uniform_real_distribution<double>(loy, hiy)(rng);
  return true;
}

}  // namespace detail

/// Deterministic synthetic scene: non-touching coloured shapes moving linearly on a dark
/// background. Every expression names one object by colour and shape, and (colour, shape)
/// pairs are unique within a scene, so each expression resolves to exactly one object.
inline SceneSpec generate_scene(std::uint64_t seed, const SceneKnobs& knobs = {}) {
  if (knobs.height % 32 || knobs.width % 32 || knobs.height == 0 || knobs.width == 0) {
    throw GenerationError("generate_scene: frame size must be a positive multiple of 32");
  }
  if (knobs.frames == 0) throw GenerationError("generate_scene: at least one frame is required");
  if (knobs.objects == 0 || knobs.objects > static_cast<std::size_t>(vocab::num_colors * vocab::num_shapes)) {
    throw GenerationError("generate_scene: object count must be in [1, 12]");
  }
  if (knobs.expressions > knobs.objects) {
    throw GenerationError("generate_scene: more expressions than objects cannot all resolve");
  }
  if (!(knobs.min_size > 0.0) || knobs.max_size < knobs.min_size) throw GenerationError("generate_scene: bad size range");

  std::mt19937_64 rng(seed);
  constexpr int kAttempts = 200;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    SceneSpec scene;
    scene.seed = seed;
    scene.knobs = knobs;

    std::vector<int> combos(vocab::num_colors * vocab::num_shapes);
    for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = static_cast<int>(i);
    std::shuffle(combos.begin(), combos.end(), rng);

    std::vector<std::vector<BinaryMask>> object_masks;
    bool ok = true;
    for (std::size_t o = 0; o < knobs.objects && ok; ++o) {
      SceneObject obj;
      obj.color = combos[o] % vocab::num_colors;
      obj.shape = static_cast<ShapeKind>(combos[o] / vocab::num_colors);
      obj.size = std::uniform_real_distribution<double>(knobs.min_size, knobs.max_size)(rng);
      bool placed = false;
      for (int tries = 0; tries < 100 && !placed; ++tries) {
        if (!detail::try_place(obj, knobs, rng)) continue;
        std::vector<BinaryMask> masks;
        for (std::size_t f = 0; f < knobs.frames; ++f) masks.push_back(rasterize(obj, f, knobs.height, knobs.width));
        bool clear = true;
        for (const auto& other : object_masks)
          for (std::size_t f = 0; f < knobs.frames && clear; ++f)
            clear = !detail::masks_too_close(masks[f], other[f], knobs.gap);
        for (const auto& m : masks) clear = clear && m.area() > 0;
        if (clear) {
          object_masks.push_back(std::move(masks));
          scene.objects.push_back(obj);
          placed = true;
        }
      }
      ok = placed;
    }
    if (!ok) continue;

    // Resolve every expression; unresolvable ones trigger a retry.
    for (std::size_t e = 0; e < knobs.expressions; ++e) {
      const auto& obj = scene.objects[e];
      SceneExpression expr{{vocab::the, vocab::first_color + obj.color, vocab::first_shape + static_cast<int>(obj.shape)}, e};
      std::size_t matches = 0;
      for (const auto& other : scene.objects)
        matches += (other.color == obj.color && other.shape == obj.shape) ? 1 : 0;
      if (matches != 1) {
        ok = false;
        break;
      }
      scene.expressions.push_back(expr);
    }
    if (!ok) continue;

    std::normal_distribution<double> noise(0.0, knobs.noise > 0.0 ? knobs.noise : 1.0);
    const std::size_t h = knobs.height, w = knobs.width;
    for (std::size_t f = 0; f < knobs.frames; ++f) {
      std::vector<double> rgb(3 * h * w, 0.0);
      for (std::size_t o = 0; o < scene.objects.size(); ++o) {
        const auto& m = object_masks[o][f];
        const auto& color = kPalette[static_cast<std::size_t>(scene.objects[o].color)];
        for (std::size_t i = 0; i < h * w; ++i)
          if (m.pixels[i])
            for (std::size_t c = 0; c < 3; ++c) rgb[c * h * w + i] = color[c];
      }
      if (knobs.noise > 0.0)
        for (double& v : rgb) v = std::clamp(v + noise(rng), 0.0, 1.0);
      scene.frames.emplace_back(Shape{3, h, w}, std::move(rgb));
    }
    for (const auto& expr : scene.expressions) {
      scene.masks.push_back(object_masks[expr.object]);
      std::vector<Box> boxes;
      for (const auto& m : object_masks[expr.object]) boxes.push_back(box_from_mask(m));
      scene.boxes.push_back(std::move(boxes));
    }
    return scene;
  }
  throw GenerationError("generate_scene: could not place objects / resolve expressions for seed " + std::to_string(seed));
}

}  // namespace rvos
