#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rvos/matching.hpp"

using namespace rvos;

namespace {

// Scalar closed forms, written out independently of the library.
double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dice_ref(const std::vector<double>& x, const std::vector<double>& y, double eps) {
  double inter = 0, sp = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    inter += sig(x[i]) * y[i];
    sp += sig(x[i]);
    sy += y[i];
  }
  return 1.0 - (2 * inter + eps) / (sp + sy + eps);
}

double focal_ref(const std::vector<double>& x, const std::vector<double>& y, double alpha, double gamma) {
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = sig(x[i]);
    acc += y[i] > 0.5 ? -alpha * std::pow(1 - p, gamma) * std::log(p) : -(1 - alpha) * std::pow(p, gamma) * std::log(1 - p);
  }
  return acc / static_cast<double>(x.size());
}

double giou_ref(const Box& a, const Box& b) {
  const double ax1 = a[0] - a[2] / 2, ax2 = a[0] + a[2] / 2, ay1 = a[1] - a[3] / 2, ay2 = a[1] + a[3] / 2;
  const double bx1 = b[0] - b[2] / 2, bx2 = b[0] + b[2] / 2, by1 = b[1] - b[3] / 2, by2 = b[1] + b[3] / 2;
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double u = a[2] * a[3] + b[2] * b[3] - iw * ih;
  const double e = (std::max(ax2, bx2) - std::min(ax1, bx1)) * (std::max(ay2, by2) - std::min(ay1, by1));
  return iw * ih / u - (e - u) / e;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

struct Fixture {
  std::vector<FrameOutputs> frames;
  std::vector<Tensor> optimized;
  std::vector<GroundTruthFrame> truth;
};

Fixture make_fixture(std::mt19937_64& rng, std::size_t n, std::size_t t, std::size_t hw, ParamStore* store = nullptr) {
  Fixture fx;
  std::uniform_real_distribution<double> u(0.2, 0.8), s(0.1, 0.3);
  for (std::size_t f = 0; f < t; ++f) {
    const std::string tag = std::to_string(f);
    auto make = [&](const std::string& name, Shape shape, double scale) {
      return store ? store->normal(name + tag, std::move(shape), scale, rng) : oracle::random_tensor(std::move(shape), rng, scale);
    };
    std::vector<double> boxes(n * 4);
    for (std::size_t q = 0; q < n; ++q) {
      boxes[q * 4] = u(rng);
      boxes[q * 4 + 1] = u(rng);
      boxes[q * 4 + 2] = s(rng);
      boxes[q * 4 + 3] = s(rng);
    }
    Tensor box_tensor = store ? store->add("boxes" + tag, {n, 4}, boxes) : Tensor({n, 4}, boxes);
    fx.frames.push_back({make("masks", {n, hw, hw}, 2.0), box_tensor, make("scores", {n}, 1.0)});
    fx.optimized.push_back(make("opt", {hw, hw}, 2.0));
    std::vector<double> m(hw * hw);
    for (auto& v : m) v = (rng() % 3 == 0) ? 1.0 : 0.0;
    fx.truth.push_back({Tensor({hw, hw}, m), {u(rng), u(rng), s(rng), s(rng)}, f + 1 != t || t == 1});
  }
  return fx;
}

}  // namespace

TEST(Losses, DiceClosedForms) {
  // Saturated prediction on 8 pixels, disjoint 8-pixel target: 1 - 1/(16+1).
  std::vector<double> x(16, -40.0), y(16, 0.0);
  for (int i = 0; i < 8; ++i) x[i] = 40.0, y[8 + i] = 1.0;
  EXPECT_NEAR(dice_loss(Tensor({4, 4}, x), Tensor({4, 4}, y)).item(), 1.0 - 1.0 / 17.0, 1e-6);
  EXPECT_NEAR(dice_loss(Tensor({4, 4}, x), Tensor({4, 4}, y)).item(), 0.941, 1e-3);
  // Hard prediction {1,1,0,0} against {1,0,0,0}: 1 - (2+1)/(3+1).
  EXPECT_NEAR(dice_loss(Tensor({4}, {40.0, 40.0, -40.0, -40.0}), Tensor({4}, {1.0, 0.0, 0.0, 0.0})).item(), 0.25, 1e-6);
}

TEST(Losses, DiceGradCheck) {
  ParamStore store;
  std::mt19937_64 rng(11);
  const Tensor x = store.normal("x", {4, 4}, 2.0, rng);
  std::vector<double> y(16);
  for (auto& v : y) v = rng() % 2 ? 1.0 : 0.0;
  const Tensor yt({4, 4}, y);
  EXPECT_LT(grad_check([&] { return dice_loss(x, yt); }, store), 1e-4);
  EXPECT_LT(grad_check([&] { return focal_loss(x, yt); }, store), 1e-4);
}

TEST(Losses, FocalClosedForm) {
  EXPECT_NEAR(focal_loss(Tensor::zeros({1}), Tensor::full({1}, 1.0)).item(), 0.043322, 1e-6);
  EXPECT_NEAR(focal_loss(Tensor::zeros({1}), Tensor::full({1}, 1.0)).item(), 0.0625 * std::log(2.0), 1e-15);
  EXPECT_NEAR(focal_loss(Tensor::zeros({1}), Tensor::zeros({1})).item(), 0.75 * 0.25 * std::log(2.0), 1e-15);
}

TEST(Losses, FocalMatchesReferenceAtExtremes) {
  std::vector<double> x{-30.0, -3.0, 0.5, 8.0, 30.0}, y{1.0, 0.0, 1.0, 0.0, 1.0};
  const double got = focal_loss(Tensor({5}, x), Tensor({5}, y)).item();
  EXPECT_NEAR(got, focal_ref(x, y, 0.25, 2.0), 1e-10);
}

TEST(Losses, GiouClosedForm) {
  // Unit boxes (0,0,1,1) and (1,1,2,2): IoU 0, enclosure 4, union 2.
  const Box a{0.5, 0.5, 1.0, 1.0}, b{1.5, 1.5, 1.0, 1.0};
  EXPECT_NEAR(generalized_iou(cxcywh_to_xyxy(a), cxcywh_to_xyxy(b)), -0.5, 1e-12);
  EXPECT_NEAR(giou_loss(Tensor({4}, {a[0], a[1], a[2], a[3]}), b).item(), 1.5, 1e-12);
  EXPECT_NEAR(giou_loss(Tensor({4}, {b[0], b[1], b[2], b[3]}), b).item(), 0.0, 1e-12);
}

TEST(Losses, L1ClosedForm) {
  EXPECT_NEAR(l1_box_loss(Tensor({4}, {0.5, 0.5, 0.2, 0.2}), {0.4, 0.6, 0.2, 0.5}).item(), 0.5, 1e-12);
}

TEST(Losses, DegenerateBoxesThrow) {
  EXPECT_THROW(giou_loss(Tensor({4}, {0.5, 0.5, 0.2, 0.2}), {0.5, 0.5, 0.0, 0.1}), DegenerateTargetError);
  EXPECT_THROW(giou_loss(Tensor({4}, {0.5, 0.5, 0.0, 0.2}), {0.5, 0.5, 0.1, 0.1}), NumericError);
}

TEST(Losses, ShapeMismatchThrows) {
  EXPECT_THROW(dice_loss(Tensor::zeros({2, 2}), Tensor::zeros({4})), ShapeError);
  EXPECT_THROW(focal_loss(Tensor::zeros({3}), Tensor::zeros({2})), ShapeError);
  EXPECT_THROW(l1_box_loss(Tensor::zeros({3}), {0, 0, 1, 1}), ShapeError);
}

TEST(Losses, RandomCasesMatchReference) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = oracle::random_tensor({5, 5}, rng, 3.0);
    std::vector<double> y(25);
    for (auto& v : y) v = rng() % 2 ? 1.0 : 0.0;
    const Tensor yt({5, 5}, y);
    EXPECT_NEAR(dice_loss(x, yt).item(), dice_ref(values(x), y, 1.0), 1e-12);
    EXPECT_NEAR(focal_loss(x, yt).item(), focal_ref(values(x), y, 0.25, 2.0), 1e-12);
  }
  std::uniform_real_distribution<double> u(0.1, 0.9), s(0.05, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const Box a{u(rng), u(rng), s(rng), s(rng)}, b{u(rng), u(rng), s(rng), s(rng)};
    EXPECT_NEAR(giou_loss(Tensor({4}, {a[0], a[1], a[2], a[3]}), b).item(), 1.0 - giou_ref(a, b), 1e-12);
  }
}

TEST(Hungarian, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 6;
    CostMatrix cost(n, std::vector<double>(n));
    for (auto& row : cost)
      for (auto& v : row) v = trial % 3 == 0 ? std::floor(u(rng)) : u(rng);  // integer costs produce ties
    const auto a = hungarian_select(cost);
    std::vector<bool> seen(n, false);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      ASSERT_GE(a[r], 0);
      ASSERT_FALSE(seen[static_cast<std::size_t>(a[r])]);
      seen[static_cast<std::size_t>(a[r])] = true;
      total += cost[r][static_cast<std::size_t>(a[r])];
    }
    EXPECT_NEAR(total, oracle::brute_force_assignment(cost), 1e-9);
  }
}

TEST(Hungarian, HandCases) {
  EXPECT_EQ(hungarian_select({{4, 1, 3}, {2, 0, 5}, {3, 2, 2}}), (std::vector<int>{1, 0, 2}));
  // More rows than columns: the cheapest row per column wins, the rest get -1.
  EXPECT_EQ(hungarian_select({{5.0}, {1.0}, {3.0}}), (std::vector<int>{-1, 0, -1}));
  EXPECT_EQ(hungarian_select({{9, 1, 8}}), (std::vector<int>{1}));
  EXPECT_TRUE(hungarian_select({}).empty());
}

TEST(Hungarian, RejectsBadInput) {
  EXPECT_THROW(hungarian_select({{1, 2}, {3}}), ShapeError);
  EXPECT_THROW(hungarian_select({{1, std::nan("")}}), NumericError);
}

TEST(Matching, CostScalesLinearlyWithWeights) {
  std::mt19937_64 rng(3);
  const auto fx = make_fixture(rng, 3, 2, 8);
  const LossWeights w;
  for (std::size_t q = 0; q < 3; ++q) {
    const double base = matching_cost(fx.frames, q, fx.truth, w);
    EXPECT_NEAR(matching_cost(fx.frames, q, fx.truth, w.scaled(2.5)), 2.5 * base, 1e-12 * std::abs(base) + 1e-14);
  }
}

TEST(Matching, SelectsLowestCostQuery) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto fx = make_fixture(rng, 5, 3, 6);
    std::size_t best = 0;
    for (std::size_t q = 1; q < 5; ++q)
      if (matching_cost(fx.frames, q, fx.truth, {}) < matching_cost(fx.frames, best, fx.truth, {})) best = q;
    EXPECT_EQ(match_query(fx.frames, fx.truth, {}), best);
  }
}

TEST(Matching, CostIsFrameAverageOfReferenceTerms) {
  std::mt19937_64 rng(5);
  const auto fx = make_fixture(rng, 2, 2, 4);
  const LossWeights w;
  const std::size_t q = 1;
  double expected = 0.0;
  for (std::size_t f = 0; f < 2; ++f) {
    const auto& gt = fx.truth[f];
    double c = w.score * focal_ref({fx.frames[f].score_logits[q]}, {gt.present ? 1.0 : 0.0}, 0.25, 2.0);
    if (gt.present) {
      const auto m = values(select0(fx.frames[f].patch_masks, q));
      const auto y = values(gt.mask);
      const Box b{fx.frames[f].boxes.at(q, 0), fx.frames[f].boxes.at(q, 1), fx.frames[f].boxes.at(q, 2),
                  fx.frames[f].boxes.at(q, 3)};
      double l1 = 0;
      for (int k = 0; k < 4; ++k) l1 += std::abs(b[k] - gt.box[k]);
      c += w.dice * dice_ref(m, y, 1.0) + w.focal * focal_ref(m, y, 0.25, 2.0) + w.l1 * l1 + w.giou * (1 - giou_ref(b, gt.box));
    }
    expected += c;
  }
  EXPECT_NEAR(matching_cost(fx.frames, q, fx.truth, w), expected / 2.0, 1e-10);
}

TEST(TotalLoss, MatchesSpreadsheet) {
  std::mt19937_64 rng(6);
  const auto fx = make_fixture(rng, 3, 2, 4);
  const LossWeights w;
  const std::size_t matched = 2;
  double expected = 0.0;
  for (std::size_t f = 0; f < 2; ++f) {
    const auto& gt = fx.truth[f];
    std::vector<double> st(3, 0.0);
    if (gt.present) st[matched] = 1.0;
    double c = w.score * 3.0 * focal_ref(values(fx.frames[f].score_logits), st, 0.25, 2.0);
    if (gt.present) {
      const auto y = values(gt.mask);
      const auto m = values(select0(fx.frames[f].patch_masks, matched));
      const auto o = values(fx.optimized[f]);
      const Box b{fx.frames[f].boxes.at(matched, 0), fx.frames[f].boxes.at(matched, 1),
                  fx.frames[f].boxes.at(matched, 2), fx.frames[f].boxes.at(matched, 3)};
      double l1 = 0;
      for (int k = 0; k < 4; ++k) l1 += std::abs(b[k] - gt.box[k]);
      c += 5 * dice_ref(m, y, 1) + 2 * focal_ref(m, y, 0.25, 2) + 5 * dice_ref(o, y, 1) + 2 * focal_ref(o, y, 0.25, 2) +
           5 * l1 + 2 * (1 - giou_ref(b, gt.box));
    }
    expected += c;
  }
  EXPECT_NEAR(total_loss(fx.frames, fx.optimized, matched, fx.truth, w).item(), expected / 2.0, 1e-10);
}

TEST(TotalLoss, FrameCountMismatchThrows) {
  std::mt19937_64 rng(7);
  auto fx = make_fixture(rng, 2, 2, 4);
  fx.truth.pop_back();
  EXPECT_THROW(total_loss(fx.frames, fx.optimized, 0, fx.truth, {}), ShapeError);
  EXPECT_THROW(matching_cost(fx.frames, 0, fx.truth, {}), ShapeError);
}

TEST(TotalLoss, GradCheck) {
  ParamStore store;
  std::mt19937_64 rng(8);
  const auto fx = make_fixture(rng, 2, 2, 16, &store);
  EXPECT_LT(grad_check([&] { return total_loss(fx.frames, fx.optimized, 1, fx.truth, {}); }, store), 1e-4);
}
