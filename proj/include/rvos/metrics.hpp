#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvos/tensor.hpp"

namespace rvos {

struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w, 0) {}
  BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> p) : height(h), width(w), pixels(std::move(p)) {
    if (pixels.size() != h * w) throw ShapeError("BinaryMask: pixel count does not match size");
  }

  std::uint8_t operator()(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::uint8_t& operator()(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  std::size_t area() const { return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), 1)); }

  /// logits >= 0, i.e. sigmoid >= 0.5.
  static BinaryMask from_logits(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("BinaryMask::from_logits: expected [H,W]");
    BinaryMask m(logits.dim(0), logits.dim(1));
    for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = logits[i] >= 0.0 ? 1 : 0;
    return m;
  }

  Tensor to_tensor() const {
    return Tensor({height, width}, std::vector<double>(pixels.begin(), pixels.end()));
  }
};

struct MaskPair {
  BinaryMask prediction;
  BinaryMask truth;
};

namespace detail {

inline void require_pair(const MaskPair& p, const char* op) {
  if (p.prediction.height != p.truth.height || p.prediction.width != p.truth.width) {
    throw ShapeError(std::string(op) + ": prediction and ground truth sizes differ");
  }
}

// Sum in ascending order so aggregates do not depend on sample order.
inline double ordered_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

}  // namespace detail

inline std::size_t intersection_area(const MaskPair& p) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.truth.pixels.size(); ++i) n += p.prediction.pixels[i] & p.truth.pixels[i];
  return n;
}

inline std::size_t union_area(const MaskPair& p) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.truth.pixels.size(); ++i) n += p.prediction.pixels[i] | p.truth.pixels[i];
  return n;
}

/// Region similarity |P & G| / |P | G|; 1 when both masks are empty.
inline double region_j(const MaskPair& p) {
  detail::require_pair(p, "region_j");
  const std::size_t uni = union_area(p);
  if (uni == 0) return 1.0;
  return static_cast<double>(intersection_area(p)) / static_cast<double>(uni);
}

/// Foreground pixels with at least one 4-neighbour outside the mask (the image border counts as outside).
inline BinaryMask mask_boundary(const BinaryMask& m) {
  BinaryMask b(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == m.height || x + 1 == m.width || !m(y - 1, x) || !m(y + 1, x) ||
                        !m(y, x - 1) || !m(y, x + 1);
      b(y, x) = edge ? 1 : 0;
    }
  return b;
}

/// Dilation by a Euclidean disk of radius `radius`.
inline BinaryMask dilate_disk(const BinaryMask& m, int radius) {
  BinaryMask out(m.height, m.width);
  const int h = static_cast<int>(m.height), w = static_cast<int>(m.width);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m(y, x)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dy * dy + dx * dx > radius * radius) continue;
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w) out(yy, xx) = 1;
        }
    }
  return out;
}

/// max(1, round(0.0075 * image diagonal)).
inline int default_boundary_tolerance(std::size_t h, std::size_t w) {
  const double diag = std::sqrt(static_cast<double>(h * h + w * w));
  return std::max(1, static_cast<int>(std::lround(0.0075 * diag)));
}

/// Contour accuracy: F-measure of boundary precision and recall where a boundary pixel
/// counts as matched when the other boundary lies within `tolerance` pixels.
inline double boundary_f(const MaskPair& p, std::optional<int> tolerance = std::nullopt) {
  detail::require_pair(p, "boundary_f");
  const int tol = tolerance.value_or(default_boundary_tolerance(p.truth.height, p.truth.width));
  const BinaryMask bp = mask_boundary(p.prediction), bg = mask_boundary(p.truth);
  const std::size_t np = bp.area(), ng = bg.area();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const BinaryMask gd = dilate_disk(bg, tol), pd = dilate_disk(bp, tol);
  std::size_t hit_p = 0, hit_g = 0;
  for (std::size_t i = 0; i < bp.pixels.size(); ++i) {
    hit_p += bp.pixels[i] & gd.pixels[i];
    hit_g += bg.pixels[i] & pd.pixels[i];
  }
  const double precision = static_cast<double>(hit_p) / static_cast<double>(np);
  const double recall = static_cast<double>(hit_g) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

/// Frames of one referred object in one video.
struct ObjectSequence {
  std::string video;
  std::vector<MaskPair> frames;
};

struct JFScores {
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
};

/// J, F and J&F averaged over frames per object, then over objects per video, then over videos.
inline JFScores jf_mean(const std::vector<ObjectSequence>& objects) {
  if (objects.empty()) throw MetricError("jf_mean: no objects");
  std::map<std::string, std::vector<std::pair<double, double>>> per_video;
  for (const auto& obj : objects) {
    if (obj.frames.empty()) throw MetricError("jf_mean: object without frames");
    std::vector<double> js, fs;
    for (const auto& pair : obj.frames) {
      js.push_back(region_j(pair));
      fs.push_back(boundary_f(pair));
    }
    per_video[obj.video].emplace_back(detail::ordered_mean(js), detail::ordered_mean(fs));
  }
  std::vector<double> vj, vf;
  for (const auto& [video, scores] : per_video) {
    std::vector<double> js, fs;
    for (const auto& [j, f] : scores) {
      js.push_back(j);
      fs.push_back(f);
    }
    vj.push_back(detail::ordered_mean(js));
    vf.push_back(detail::ordered_mean(fs));
  }
  JFScores out;
  out.j = detail::ordered_mean(vj);
  out.f = detail::ordered_mean(vf);
  out.jf = 0.5 * (out.j + out.f);
  return out;
}

/// Pooled intersection over pooled union.
inline double overall_iou(const std::vector<MaskPair>& pairs) {
  if (pairs.empty()) throw MetricError("overall_iou: empty set");
  std::size_t inter = 0, uni = 0;
  for (const auto& p : pairs) {
    detail::require_pair(p, "overall_iou");
    inter += intersection_area(p);
    uni += union_area(p);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double mean_iou(const std::vector<MaskPair>& pairs) {
  if (pairs.empty()) throw MetricError("mean_iou: empty set");
  std::vector<double> ious;
  for (const auto& p : pairs) ious.push_back(region_j(p));
  return detail::ordered_mean(ious);
}

struct ScoredPrediction {
  MaskPair pair;
  double score = 0.0;
};

/// Average precision at IoU thresholds 0.50:0.05:0.95, averaged. Predictions are ranked by
/// score; each is a true positive when its IoU with its ground truth reaches the threshold.
/// AP is the area under the monotone precision envelope.
inline double map_at_thresholds(const std::vector<ScoredPrediction>& preds) {
  std::size_t positives = 0;
  for (const auto& p : preds) positives += p.pair.truth.area() > 0 ? 1 : 0;
  if (positives == 0) throw MetricError("map_at_thresholds: no ground-truth objects");

  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  std::vector<double> ious(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) ious[i] = preds[i].pair.truth.area() > 0 ? region_j(preds[i].pair) : 0.0;

  double total = 0.0;
  for (int t = 0; t < 10; ++t) {
    const double threshold = 0.5 + 0.05 * t;
    std::vector<double> precision(order.size()), recall(order.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (ious[order[k]] >= threshold - 1e-12) ++tp;
      precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
      recall[k] = static_cast<double>(tp) / static_cast<double>(positives);
    }
    for (std::size_t k = order.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
    total += ap;
  }
  return total / 10.0;
}

/// Distance between the centroids of two token sets [n,d] and [m,d], in units of the mean
/// of their per-dimension RMS spreads.
inline double drift_score(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) throw ShapeError("drift_score: token widths differ");
  if (a.dim(0) < 2 || b.dim(0) < 2) throw MetricError("drift_score: spread undefined for fewer than two tokens");
  const std::size_t d = a.dim(1);
  auto stats = [d](const Tensor& t, std::vector<double>& centroid) {
    const std::size_t n = t.dim(0);
    centroid.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) centroid[k] += t[i * d + k];
    for (double& c : centroid) c /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) ss += (t[i * d + k] - centroid[k]) * (t[i * d + k] - centroid[k]);
    return std::sqrt(ss / static_cast<double>((n - 1) * d));
  };
  std::vector<double> ca, cb;
  const double sa = stats(a, ca), sb = stats(b, cb);
  double dist2 = 0.0;
  for (std::size_t k = 0; k < d; ++k) dist2 += (ca[k] - cb[k]) * (ca[k] - cb[k]);
  const double spread = 0.5 * (sa + sb);
  if (spread == 0.0) throw MetricError("drift_score: both token sets have zero spread");
  return std::sqrt(dist2) / spread;
}

}  // namespace rvos
