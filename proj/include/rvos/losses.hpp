#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "rvos/instance_decoder.hpp"
#include "rvos/ops.hpp"

namespace rvos {

struct DegenerateTargetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 1 - (2 sum(sigmoid(x) y) + eps) / (sum(sigmoid(x)) + sum(y) + eps).
inline Tensor dice_loss(const Tensor& logits, const Tensor& target, double eps = 1.0) {
  detail::require_same_shape(logits, target, "dice_loss");
  const auto x = logits.data(), y = target.data();
  std::vector<double> prob(x.size());
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    prob[i] = detail::sigmoid_scalar(x[i]);
    inter += prob[i] * y[i];
    total += prob[i] + y[i];
  }
  const double num = 2.0 * inter + eps, den = total + eps;
  return detail::make_result({}, {1.0 - num / den}, {logits}, [logits, target, prob, num, den](const std::vector<double>& g) {
    auto* gx = detail::grad_of(logits);
    if (!gx) return;
    const auto y = target.data();
    const double inv = 1.0 / (den * den);
    for (std::size_t i = 0; i < prob.size(); ++i) {
      const double dp = -(2.0 * y[i] * den - num) * inv;
      (*gx)[i] += g[0] * dp * prob[i] * (1.0 - prob[i]);
    }
  }, "dice_loss");
}

/// Mean binary focal loss -alpha_t (1 - p_t)^gamma log(p_t) on sigmoid probabilities.
inline Tensor focal_loss(const Tensor& logits, const Tensor& target, double alpha = 0.25, double gamma = 2.0) {
  detail::require_same_shape(logits, target, "focal_loss");
  const auto x = logits.data(), y = target.data();
  const double inv_n = 1.0 / static_cast<double>(x.size());
  std::vector<double> dx(x.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool positive = y[i] > 0.5;
    const double sign = positive ? 1.0 : -1.0;
    const double a = positive ? alpha : 1.0 - alpha;
    const double z = sign * x[i];
    const double q = detail::sigmoid_scalar(z);     // p_t
    const double r = detail::sigmoid_scalar(-z);    // 1 - p_t
    const double log_q = -detail::softplus_scalar(-z);
    const double mod = std::pow(r, gamma);
    acc += -a * mod * log_q;
    dx[i] = sign * a * (gamma * mod * q * log_q - mod * r) * inv_n;
  }
  return detail::make_result({}, {acc * inv_n}, {logits}, [logits, dx](const std::vector<double>& g) {
    if (auto* gx = detail::grad_of(logits))
      for (std::size_t i = 0; i < dx.size(); ++i) (*gx)[i] += g[0] * dx[i];
  }, "focal_loss");
}

/// Sum of absolute coordinate differences between a predicted [4] box and a target.
inline Tensor l1_box_loss(const Tensor& pred, const Box& target) {
  if (pred.numel() != 4) throw ShapeError("l1_box_loss: box must hold 4 values");
  double acc = 0.0;
  for (std::size_t i = 0; i < 4; ++i) acc += std::abs(pred[i] - target[i]);
  return detail::make_result({}, {acc}, {pred}, [pred, target](const std::vector<double>& g) {
    if (auto* gp = detail::grad_of(pred))
      for (std::size_t i = 0; i < 4; ++i) {
        const double d = pred[i] - target[i];
        (*gp)[i] += g[0] * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      }
  }, "l1_box_loss");
}

/// Generalized IoU of two (x1, y1, x2, y2) boxes.
inline double generalized_iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double uni = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  const double enclosure = (std::max(a[2], b[2]) - std::min(a[0], b[0])) * (std::max(a[3], b[3]) - std::min(a[1], b[1]));
  return inter / uni - (enclosure - uni) / enclosure;
}

/// 1 - GIoU between a predicted (cx, cy, w, h) box [4] and a target box in the same format.
inline Tensor giou_loss(const Tensor& pred, const Box& target) {
  if (pred.numel() != 4) throw ShapeError("giou_loss: box must hold 4 values");
  if (!(target[2] > 0.0) || !(target[3] > 0.0)) {
    throw DegenerateTargetError("giou_loss: target box has zero width or height");
  }
  const Box p = cxcywh_to_xyxy({pred[0], pred[1], pred[2], pred[3]});
  const Box t = cxcywh_to_xyxy(target);
  if (!(p[2] > p[0]) || !(p[3] > p[1])) throw NumericError("giou_loss: predicted box is degenerate");
  const double value = 1.0 - generalized_iou(p, t);
  return detail::make_result({}, {value}, {pred}, [pred, p, t](const std::vector<double>& g) {
    auto* gp = detail::grad_of(pred);
    if (!gp) return;
    const double iw_raw = std::min(p[2], t[2]) - std::max(p[0], t[0]);
    const double ih_raw = std::min(p[3], t[3]) - std::max(p[1], t[1]);
    const double iw = std::max(0.0, iw_raw), ih = std::max(0.0, ih_raw);
    const double inter = iw * ih;
    const double pw = p[2] - p[0], ph = p[3] - p[1];
    const double area_p = pw * ph;
    const double uni = area_p + (t[2] - t[0]) * (t[3] - t[1]) - inter;
    const double ew = std::max(p[2], t[2]) - std::min(p[0], t[0]);
    const double eh = std::max(p[3], t[3]) - std::min(p[1], t[1]);
    const double enc = ew * eh;

    // giou = I/U - 1 + U/E with U = A_p + A_t - I.
    const double c_inter = 1.0 / uni + inter / (uni * uni) - 1.0 / enc;
    const double c_area = -inter / (uni * uni) + 1.0 / enc;
    const double c_enc = -uni / (enc * enc);

    // d/d(x1, y1, x2, y2) of the pieces.
    std::array<double, 4> d_inter{0, 0, 0, 0}, d_area{-ph, -pw, ph, pw}, d_enc{0, 0, 0, 0};
    if (iw_raw > 0.0 && ih_raw > 0.0) {
      if (p[0] > t[0]) d_inter[0] = -ih;
      if (p[2] < t[2]) d_inter[2] = ih;
      if (p[1] > t[1]) d_inter[1] = -iw;
      if (p[3] < t[3]) d_inter[3] = iw;
    }
    if (p[0] < t[0]) d_enc[0] = -eh;
    if (p[2] > t[2]) d_enc[2] = eh;
    if (p[1] < t[1]) d_enc[1] = -ew;
    if (p[3] > t[3]) d_enc[3] = ew;

    std::array<double, 4> d_xyxy{};
    for (std::size_t i = 0; i < 4; ++i) d_xyxy[i] = -(c_inter * d_inter[i] + c_area * d_area[i] + c_enc * d_enc[i]);
    // x1 = cx - w/2, x2 = cx + w/2 (same for y).
    (*gp)[0] += g[0] * (d_xyxy[0] + d_xyxy[2]);
    (*gp)[1] += g[0] * (d_xyxy[1] + d_xyxy[3]);
    (*gp)[2] += g[0] * 0.5 * (d_xyxy[2] - d_xyxy[0]);
    (*gp)[3] += g[0] * 0.5 * (d_xyxy[3] - d_xyxy[1]);
  }, "giou_loss");
}

struct BoxLosses {
  Tensor l1;
  Tensor giou;
};

inline BoxLosses box_losses(const Tensor& pred, const Box& target) {
  return {l1_box_loss(pred, target), giou_loss(pred, target)};
}

}  // namespace rvos
