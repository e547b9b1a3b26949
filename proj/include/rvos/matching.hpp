#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "rvos/losses.hpp"

namespace rvos {

/// Loss coefficients and loss hyper-parameters.
struct LossWeights {
  double dice = 5.0;
  double focal = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
  double score = 2.0;
  double dice_eps = 1.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  LossWeights scaled(double c) const {
    LossWeights w = *this;
    w.dice *= c;
    w.focal *= c;
    w.l1 *= c;
    w.giou *= c;
    w.score *= c;
    return w;
  }
};

/// Outputs of every instance query on one frame.
struct FrameOutputs {
  Tensor patch_masks;   // [N, H, W] patch-mask logits resized to ground-truth resolution
  Tensor boxes;         // [N, 4] normalized (cx, cy, w, h)
  Tensor score_logits;  // [N]
};

struct GroundTruthFrame {
  Tensor mask;  // [H, W] of 0/1
  Box box{};    // normalized (cx, cy, w, h)
  bool present = true;
};

namespace detail {

inline Tensor mask_terms(const Tensor& logits, const Tensor& target, const LossWeights& w) {
  return add(scale(dice_loss(logits, target, w.dice_eps), w.dice),
             scale(focal_loss(logits, target, w.focal_alpha, w.focal_gamma), w.focal));
}

inline Tensor box_terms(const Tensor& box, const Box& target, const LossWeights& w) {
  const auto losses = box_losses(box, target);
  return add(scale(losses.l1, w.l1), scale(losses.giou, w.giou));
}

inline void require_frames(std::size_t outputs, std::size_t truth, const char* op) {
  if (outputs == 0 || outputs != truth) {
    throw ShapeError(std::string(op) + ": " + std::to_string(outputs) + " predicted frames vs " +
                     std::to_string(truth) + " ground-truth frames");
  }
}

}  // namespace detail

/// Per-query matching cost: mask (dice + focal on the patch mask), box (L1 + GIoU) and
/// score (focal against "present") terms, averaged over frames.
inline double matching_cost(const std::vector<FrameOutputs>& frames, std::size_t query,
                            const std::vector<GroundTruthFrame>& truth, const LossWeights& w) {
  detail::require_frames(frames.size(), truth.size(), "matching_cost");
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& out = frames[f];
    const auto& gt = truth[f];
    const Tensor score = slice0(out.score_logits, query, query + 1);
    const Tensor score_target = Tensor::full({1}, gt.present ? 1.0 : 0.0);
    double cost = w.score * focal_loss(score, score_target, w.focal_alpha, w.focal_gamma).item();
    if (gt.present) {
      cost += detail::mask_terms(select0(out.patch_masks, query), gt.mask, w).item();
      cost += detail::box_terms(select0(out.boxes, query), gt.box, w).item();
    }
    total += cost;
  }
  return total / static_cast<double>(frames.size());
}

using CostMatrix = std::vector<std::vector<double>>;

/// Minimum-total-cost one-to-one assignment (Kuhn-Munkres with potentials).
/// Returns, for every row, the assigned column or -1 when there are more rows than columns.
inline std::vector<int> hungarian_select(const CostMatrix& cost) {
  const std::size_t rows = cost.size();
  if (rows == 0) return {};
  const std::size_t cols = cost.front().size();
  for (const auto& r : cost) {
    if (r.size() != cols) throw ShapeError("hungarian_select: ragged cost matrix");
    for (double v : r)
      if (!std::isfinite(v)) throw NumericError("hungarian_select: non-finite cost");
  }
  if (cols == 0) return std::vector<int>(rows, -1);

  if (rows > cols) {
    CostMatrix transposed(cols, std::vector<double>(rows));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) transposed[c][r] = cost[r][c];
    const auto by_col = hungarian_select(transposed);
    std::vector<int> out(rows, -1);
    for (std::size_t c = 0; c < cols; ++c) out[static_cast<std::size_t>(by_col[c])] = static_cast<int>(c);
    return out;
  }

  // rows <= cols; 1-based arrays, column 0 is the virtual start.
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = rows, m = cols;
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(n, -1);
  for (std::size_t j = 1; j <= m; ++j)
    if (match[j]) out[match[j] - 1] = static_cast<int>(j - 1);
  return out;
}

/// Index of the query with the lowest matching cost against one ground-truth track.
inline std::size_t match_query(const std::vector<FrameOutputs>& frames, const std::vector<GroundTruthFrame>& truth,
                               const LossWeights& w) {
  const std::size_t n = frames.at(0).score_logits.numel();
  CostMatrix cost(n, std::vector<double>(1));
  for (std::size_t q = 0; q < n; ++q) cost[q][0] = matching_cost(frames, q, truth, w);
  const auto assignment = hungarian_select(cost);
  for (std::size_t q = 0; q < n; ++q)
    if (assignment[q] == 0) return q;
  throw std::logic_error("match_query: no query assigned");
}

/// Training objective for one expression after matching. Mask terms use both the patch mask
/// and the optimized mask of the matched query; every query contributes a score term whose
/// target is 1 only for the matched query on frames where the object is present.
inline Tensor total_loss(const std::vector<FrameOutputs>& frames, const std::vector<Tensor>& optimized_masks,
                         std::size_t matched, const std::vector<GroundTruthFrame>& truth, const LossWeights& w) {
  detail::require_frames(frames.size(), truth.size(), "total_loss");
  detail::require_frames(optimized_masks.size(), truth.size(), "total_loss");
  std::vector<Tensor> per_frame;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& out = frames[f];
    const auto& gt = truth[f];
    const std::size_t n = out.score_logits.numel();
    std::vector<double> targets(n, 0.0);
    if (gt.present) targets[matched] = 1.0;
    Tensor loss = scale(focal_loss(out.score_logits, Tensor({n}, targets), w.focal_alpha, w.focal_gamma),
                        w.score * static_cast<double>(n));
    if (gt.present) {
      loss = add(loss, detail::mask_terms(select0(out.patch_masks, matched), gt.mask, w));
      loss = add(loss, detail::mask_terms(optimized_masks[f], gt.mask, w));
      loss = add(loss, detail::box_terms(select0(out.boxes, matched), gt.box, w));
    }
    per_frame.push_back(reshape(loss, {1}));
  }
  return scale(sum_all(concat0(per_frame)), 1.0 / static_cast<double>(frames.size()));
}

}  // namespace rvos
