#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rvos/mask_optimizer.hpp"

using namespace rvos;

namespace {

void zero_residuals(ParamStore& store) {
  for (const char* name : {"mso.s8.residual_weight", "mso.s8.residual_bias", "mso.s4.residual_weight",
                           "mso.s4.residual_bias"})
    std::fill(store.values(name).begin(), store.values(name).end(), 0.0);
}

}  // namespace

TEST(Mso, ZeroResidualIsPlainUpsample) {
  ParamStore store;
  std::mt19937_64 rng(1);
  const auto p = make_mso_params(store, "mso", 16, 5, 6, rng);
  zero_residuals(store);
  const Tensor mask = oracle::random_tensor({16, 2, 3}, rng);
  const Tensor stage = mso_stage(mask, oracle::random_tensor({5, 4, 6}, rng), p.stride8);
  const Tensor up = resize_bilinear(mask, 2);
  ASSERT_EQ(stage.shape(), (Shape{16, 4, 6}));
  for (std::size_t i = 0; i < up.numel(); ++i) EXPECT_EQ(stage[i], up[i]);
}

TEST(Mso, ZeroedOptimizerEqualsUpsampleMasks) {
  ParamStore store;
  std::mt19937_64 rng(2);
  const auto p = make_mso_params(store, "mso", 16, 5, 6, rng);
  zero_residuals(store);
  const Tensor mask = oracle::random_tensor({16, 2, 2}, rng);
  const Tensor out =
      optimize_masks(mask, oracle::random_tensor({5, 4, 4}, rng), oracle::random_tensor({5, 8, 8}, rng), p);
  const Tensor ref = upsample_masks(mask);
  ASSERT_EQ(out.shape(), (Shape{32, 32}));
  for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_EQ(out[i], ref[i]);
}

TEST(Mso, EachStageDoubles) {
  ParamStore store;
  std::mt19937_64 rng(3);
  const auto p = make_mso_params(store, "mso", 16, 3, 4, rng);
  const Tensor s8 = mso_stage(oracle::random_tensor({16, 3, 5}, rng), oracle::random_tensor({3, 6, 10}, rng), p.stride8);
  EXPECT_EQ(s8.shape(), (Shape{16, 6, 10}));
  const Tensor s4 = mso_stage(s8, oracle::random_tensor({3, 12, 20}, rng), p.stride4);
  EXPECT_EQ(s4.shape(), (Shape{16, 12, 20}));
  EXPECT_EQ(flatten_patches(s4).shape(), (Shape{48, 80}));
  EXPECT_THROW(mso_stage(s8, oracle::random_tensor({3, 6, 10}, rng), p.stride4), ShapeError);
}

TEST(Mso, SingleTokenHandCase) {
  // One token whose 16 channels are constants c_k: upsampling keeps each channel flat, so
  // pixel (Y, X) of the 16x16 output is c_{(Y%4)*4 + X%4}.
  std::vector<double> c(16);
  for (std::size_t k = 0; k < 16; ++k) c[k] = 0.5 * static_cast<double>(k) - 3.0;
  const Tensor out = upsample_masks(Tensor({16, 1, 1}, c));
  ASSERT_EQ(out.shape(), (Shape{16, 16}));
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) EXPECT_EQ(out.at(y, x), c[(y % 4) * 4 + x % 4]);
}

TEST(Mso, OneChannelHandCase) {
  // mask 0.5 on one pixel, features (1, -2, 0.25, 3) on the 2x2 grid,
  // proj = relu(2 m + 1 v - 0.5), residual = 0.5 proj + 0.1.
  const MSOStageParams p{Tensor({1, 2}, {2.0, 1.0}), Tensor({1}, {-0.5}), Tensor({1, 1}, {0.5}), Tensor({1}, {0.1})};
  const Tensor out = mso_stage(Tensor({1, 1, 1}, {0.5}), Tensor({1, 2, 2}, {1.0, -2.0, 0.25, 3.0}), p);
  ASSERT_EQ(out.shape(), (Shape{1, 2, 2}));
  EXPECT_NEAR(out[0], 1.35, 1e-15);
  EXPECT_NEAR(out[1], 0.6, 1e-15);
  EXPECT_NEAR(out[2], 0.975, 1e-15);
  EXPECT_NEAR(out[3], 2.35, 1e-15);
}

TEST(Mso, RequiresPatchFour) {
  ParamStore store;
  std::mt19937_64 rng(4);
  const auto p = make_mso_params(store, "mso", 16, 3, 4, rng);
  const Tensor mask = Tensor::zeros({16, 1, 1}), v8 = Tensor::zeros({3, 2, 2}), v4 = Tensor::zeros({3, 4, 4});
  EXPECT_THROW(optimize_masks(mask, v8, v4, p, 2), ConfigError);
  EXPECT_THROW(optimize_masks(Tensor::zeros({4, 1, 1}), v8, v4, p), ConfigError);
}

TEST(Mso, FiniteForLargeLogits) {
  ParamStore store;
  std::mt19937_64 rng(5);
  const auto p = make_mso_params(store, "mso", 16, 4, 8, rng);
  const Tensor out = optimize_masks(oracle::random_tensor({16, 2, 2}, rng, 1e3), oracle::random_tensor({4, 4, 4}, rng, 1e3),
                                    oracle::random_tensor({4, 8, 8}, rng, 1e3), p);
  for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Mso, GradCheck) {
  ParamStore store;
  std::mt19937_64 rng(6);
  const auto p = make_mso_params(store, "mso", 16, 3, 4, rng);
  // Push the residual branch up so it carries gradient comparable to the skip path.
  for (const char* name : {"mso.s8.residual_weight", "mso.s4.residual_weight"})
    for (double& v : store.values(name)) v *= 10.0;
  const Tensor mask = store.normal("mask", {16, 1, 2}, 1.0, rng);
  const Tensor v8 = store.normal("v8", {3, 2, 4}, 1.0, rng);
  const Tensor v4 = store.normal("v4", {3, 4, 8}, 1.0, rng);
  const Tensor probe = oracle::random_tensor({16, 32}, rng);
  EXPECT_LT(grad_check([&] { return sum_all(mul(optimize_masks(mask, v8, v4, p), probe)); }, store), 1e-4);
}
