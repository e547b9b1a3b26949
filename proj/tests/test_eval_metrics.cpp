#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "rvos/metrics.hpp"

using namespace rvos;

namespace {

BinaryMask rect(std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1) {
  BinaryMask m(h, w);
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) m(y, x) = 1;
  return m;
}

BinaryMask random_blob(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  // Union of a few rectangles.
  BinaryMask m(h, w);
  for (int k = 0; k < 3; ++k) {
    const std::size_t y0 = rng() % h, x0 = rng() % w;
    const std::size_t y1 = std::min(h, y0 + 1 + rng() % 8), x1 = std::min(w, x0 + 1 + rng() % 8);
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) m(y, x) = 1;
  }
  return m;
}

}  // namespace

TEST(RegionJ, ShiftedSquare) {
  const MaskPair p{rect(4, 4, 0, 1, 2, 3), rect(4, 4, 0, 0, 2, 2)};
  EXPECT_DOUBLE_EQ(region_j(p), 2.0 / 6.0);
}

TEST(RegionJ, EmptyPairIsPerfect) {
  EXPECT_EQ(region_j({BinaryMask(3, 3), BinaryMask(3, 3)}), 1.0);
  EXPECT_EQ(boundary_f({BinaryMask(3, 3), BinaryMask(3, 3)}), 1.0);
  EXPECT_EQ(boundary_f({rect(5, 5, 1, 1, 3, 3), BinaryMask(5, 5)}), 0.0);
  EXPECT_THROW(region_j({BinaryMask(3, 3), BinaryMask(3, 4)}), ShapeError);
}

TEST(BoundaryF, MatchesNearestNeighbourOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t h = 12 + rng() % 20, w = 12 + rng() % 20;
    const MaskPair p{random_blob(h, w, rng), random_blob(h, w, rng)};
    for (int tol : {1, 2, 3}) EXPECT_DOUBLE_EQ(boundary_f(p, tol), oracle::boundary_f_bruteforce(p.prediction, p.truth, tol));
  }
}

TEST(BoundaryF, ShiftedSquareHandCase) {
  const MaskPair p{rect(8, 8, 2, 3, 5, 6), rect(8, 8, 2, 2, 5, 5)};
  const double f = boundary_f(p, 1);
  EXPECT_DOUBLE_EQ(f, oracle::boundary_f_bruteforce(p.prediction, p.truth, 1));
  // A 1 px shift keeps every contour pixel within reach at tol 1.
  EXPECT_DOUBLE_EQ(f, 1.0);
  EXPECT_DOUBLE_EQ(boundary_f(p, 0), oracle::boundary_f_bruteforce(p.prediction, p.truth, 0));
}

TEST(BoundaryF, SymmetricInArguments) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const MaskPair p{random_blob(20, 20, rng), random_blob(20, 20, rng)};
    EXPECT_EQ(boundary_f(p), boundary_f({p.truth, p.prediction}));
  }
}

TEST(BoundaryF, BorderPixelsAreBoundary) {
  const BinaryMask full = rect(4, 4, 0, 0, 4, 4);
  const BinaryMask b = mask_boundary(full);
  EXPECT_EQ(b.area(), 12u);
  EXPECT_EQ(default_boundary_tolerance(64, 64), 1);
  EXPECT_EQ(default_boundary_tolerance(480, 854), 7);
}

TEST(Iou, MeanVersusOverall) {
  // Pair 1 is perfect on 2 pixels, pair 2 misses all 6 pixels.
  const std::vector<MaskPair> pairs{{rect(4, 4, 0, 0, 1, 2), rect(4, 4, 0, 0, 1, 2)},
                                    {BinaryMask(4, 4), rect(4, 4, 1, 0, 3, 3)}};
  EXPECT_DOUBLE_EQ(mean_iou(pairs), 0.5);
  EXPECT_DOUBLE_EQ(overall_iou(pairs), 2.0 / 8.0);
  EXPECT_THROW(mean_iou({}), MetricError);
  // Equal areas: both 0.5.
  const std::vector<MaskPair> equal{{rect(4, 4, 0, 0, 2, 2), rect(4, 4, 0, 0, 2, 2)},
                                    {BinaryMask(4, 4), rect(4, 4, 2, 2, 4, 4)}};
  EXPECT_DOUBLE_EQ(mean_iou(equal), 0.5);
  EXPECT_DOUBLE_EQ(overall_iou(equal), 0.5);
}

TEST(JandF, HierarchicalAveraging) {
  // Video "a" has objects with J = 1 and J = 0, video "b" one object with J = 1/3.
  const auto perfect = MaskPair{rect(8, 8, 2, 2, 4, 4), rect(8, 8, 2, 2, 4, 4)};
  const auto miss = MaskPair{BinaryMask(8, 8), rect(8, 8, 2, 2, 4, 4)};
  const auto third = MaskPair{rect(8, 8, 0, 1, 2, 3), rect(8, 8, 0, 0, 2, 2)};
  const std::vector<ObjectSequence> objs{{"a", {perfect, perfect}}, {"a", {miss}}, {"b", {third}}};
  const auto s = jf_mean(objs);
  EXPECT_DOUBLE_EQ(s.j, 0.5 * (0.5 + 1.0 / 3.0));
  EXPECT_DOUBLE_EQ(s.jf, 0.5 * (s.j + s.f));
}

TEST(JandF, InvariantToObjectOrder) {
  std::mt19937_64 rng(3);
  std::vector<ObjectSequence> objs;
  for (int o = 0; o < 7; ++o) {
    ObjectSequence s{"v" + std::to_string(o % 3), {}};
    for (int t = 0; t < 3; ++t) s.frames.push_back({random_blob(16, 16, rng), random_blob(16, 16, rng)});
    objs.push_back(s);
  }
  const auto a = jf_mean(objs);
  std::reverse(objs.begin(), objs.end());
  std::swap(objs[1], objs[4]);
  const auto b = jf_mean(objs);
  EXPECT_EQ(a.j, b.j);
  EXPECT_EQ(a.f, b.f);
  EXPECT_EQ(a.jf, b.jf);
  EXPECT_THROW(jf_mean({}), MetricError);
}

TEST(Map, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ScoredPrediction> preds;
    std::vector<double> ious, scores;
    std::size_t positives = 0;
    for (int i = 0; i < 8; ++i) {
      ScoredPrediction p{{random_blob(12, 12, rng), random_blob(12, 12, rng)}, std::floor(u(rng) * 4) / 4};
      if (i % 4 == 3) p.pair.truth = BinaryMask(12, 12);
      preds.push_back(p);
      scores.push_back(p.score);
      const bool positive = p.pair.truth.area() > 0;
      positives += positive;
      ious.push_back(positive ? region_j(p.pair) : 0.0);
    }
    double expected = 0.0;
    for (int t = 0; t < 10; ++t) expected += oracle::average_precision_exhaustive(ious, scores, positives, 0.5 + 0.05 * t);
    EXPECT_NEAR(map_at_thresholds(preds), expected / 10.0, 1e-12);
  }
}

TEST(Map, ThreePredictionFixture) {
  // IoUs 1, 0.5 and 0 ranked by score 0.9, 0.8, 0.7.
  const auto m = rect(4, 4, 0, 0, 2, 2);
  const std::vector<ScoredPrediction> preds{{{m, m}, 0.9}, {{rect(4, 4, 0, 0, 2, 1), m}, 0.8},
                                            {{rect(4, 4, 2, 2, 4, 4), m}, 0.7}};
  double expected = 0.0;
  for (int t = 0; t < 10; ++t) expected += oracle::average_precision_exhaustive({1.0, 0.5, 0.0}, {0.9, 0.8, 0.7}, 3, 0.5 + 0.05 * t);
  EXPECT_NEAR(map_at_thresholds(preds), expected / 10.0, 1e-12);
  // t = 0.50: recalls 1/3 then 2/3 at precision 1 -> 2/3; above 0.50 only the first counts -> 1/3.
  EXPECT_NEAR(map_at_thresholds(preds), (2.0 / 3.0 + 9.0 / 3.0) / 10.0, 1e-12);
}

TEST(Map, PerfectAndEmpty) {
  const auto m = rect(6, 6, 1, 1, 4, 4);
  EXPECT_DOUBLE_EQ(map_at_thresholds({{{m, m}, 0.9}, {{m, m}, 0.1}}), 1.0);
  EXPECT_DOUBLE_EQ(map_at_thresholds({{{BinaryMask(6, 6), m}, 0.9}}), 0.0);
  EXPECT_THROW(map_at_thresholds({{{m, BinaryMask(6, 6)}, 0.9}}), MetricError);
}

TEST(Drift, IdenticalSetsGiveZero) {
  std::mt19937_64 rng(5);
  const Tensor a = oracle::random_tensor({50, 4}, rng);
  EXPECT_EQ(drift_score(a, a), 0.0);
}

TEST(Drift, TenSpreadShift) {
  std::mt19937_64 rng(6);
  const Tensor a = oracle::random_tensor({4000, 3}, rng);
  std::vector<double> shifted(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < 4000; ++i) shifted[i * 3] += 10.0;
  const Tensor b({4000, 3}, shifted);
  EXPECT_NEAR(drift_score(a, b), 10.0, 0.3);
  EXPECT_DOUBLE_EQ(drift_score(a, b), drift_score(b, a));
}

TEST(Drift, RejectsDegenerateInput) {
  EXPECT_THROW(drift_score(Tensor::zeros({1, 3}), Tensor::zeros({4, 3})), MetricError);
  EXPECT_THROW(drift_score(Tensor::zeros({3, 3}), Tensor::zeros({4, 3})), MetricError);
  EXPECT_THROW(drift_score(Tensor::zeros({3, 3}), Tensor::zeros({4, 2})), ShapeError);
}
