#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rvos/fft.hpp"
#include "rvos/ops.hpp"
#include "rvos/params.hpp"

using namespace rvos;

TEST(Fft, ConstantPlaneIsPureDc) {
  const double c = 1.75;
  const auto s = fft2(Tensor::full({1, 4, 4}, c));
  EXPECT_DOUBLE_EQ(s.real[0], 16.0 * c);
  EXPECT_DOUBLE_EQ(s.imag[0], 0.0);
  for (std::size_t i = 1; i < 16; ++i) {
    EXPECT_NEAR(s.real[i], 0.0, 1e-12);
    EXPECT_NEAR(s.imag[i], 0.0, 1e-12);
  }
}

TEST(Fft, RoundTripOddSizes) {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({2, 5, 7}, rng);
  const Tensor back = ifft2(fft2(x));
  EXPECT_LT(oracle::max_abs_diff(back.data(), x.data()), 1e-9);
}

TEST(Fft, MatchesNaiveDft) {
  std::mt19937_64 rng(2);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {3, 5}, {8, 2}, {6, 6}}) {
    const Tensor x = oracle::random_tensor({2, h, w}, rng);
    const auto s = fft2(x);
    for (std::size_t c = 0; c < 2; ++c) {
      const auto ref = oracle::naive_dft2(x.data().data() + c * h * w, h, w);
      double err = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < h * w; ++i) {
        err = std::max(err, std::abs(ref[i] - std::complex<double>(s.real[c * h * w + i], s.imag[c * h * w + i])));
        scale = std::max(scale, std::abs(ref[i]));
      }
      EXPECT_LT(err / scale, 1e-9) << h << "x" << w;
    }
  }
}

TEST(Fft, DcOnlySpectrumInvertsToConstant) {
  Spectrum s{{1, 4, 4}, std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)};
  s.real[0] = 16.0 * 2.5;
  const Tensor x = ifft2(s);
  for (double v : x.data()) EXPECT_NEAR(v, 2.5, 1e-14);
}

TEST(Fft, SymmetricSpectrumRoundTrip) {
  std::mt19937_64 rng(3);
  const auto s = fft2(oracle::random_tensor({1, 6, 4}, rng));
  const auto again = fft2(ifft2(s));
  EXPECT_LT(oracle::max_abs_diff(again.real, s.real), 1e-9);
  EXPECT_LT(oracle::max_abs_diff(again.imag, s.imag), 1e-9);
}

TEST(Fft, NonSymmetricSpectrumThrows) {
  Spectrum s{{1, 4, 4}, std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)};
  s.imag[1] = 1.0;  // no conjugate partner at (0,3)
  EXPECT_THROW(ifft2(s), SymmetryError);
  EXPECT_GT(hermitian_residue(s), 0.1);
}

TEST(Fft, RejectsNon3dInput) {
  EXPECT_THROW(fft2(Tensor::zeros({4, 4})), ShapeError);
}

TEST(Fft, HermitianSymmetryOfRealInput) {
  std::mt19937_64 rng(4);
  EXPECT_LT(hermitian_residue(fft2(oracle::random_tensor({3, 5, 8}, rng))), 1e-12);
}

TEST(Fft, Parseval) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = oracle::random_tensor({2, 8, 6}, rng);
    const auto s = fft2(x);
    double energy = 0.0, spectral = 0.0;
    for (double v : x.data()) energy += v * v;
    for (std::size_t i = 0; i < s.real.size(); ++i) spectral += s.real[i] * s.real[i] + s.imag[i] * s.imag[i];
    EXPECT_LT(std::abs(energy - spectral / 48.0) / energy, 1e-8);
  }
}

TEST(Fft, Linearity) {
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({1, 8, 8}, rng), y = oracle::random_tensor({1, 8, 8}, rng);
  const double a = 0.7, b = -1.3;
  const auto lhs = fft2(add(scale(x, a), scale(y, b)));
  const auto sx = fft2(x), sy = fft2(y);
  for (std::size_t i = 0; i < lhs.real.size(); ++i) {
    EXPECT_NEAR(lhs.real[i], a * sx.real[i] + b * sy.real[i], 1e-9);
    EXPECT_NEAR(lhs.imag[i], a * sx.imag[i] + b * sy.imag[i], 1e-9);
  }
}

TEST(Conv1x1, IdentityWeight) {
  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor({3, 4, 5}, rng);
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  const Tensor y = conv1x1(x, Tensor({3, 3}, eye), Tensor::zeros({3}));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv1x1, ZeroWeightGivesBiasPlanes) {
  std::mt19937_64 rng(8);
  const Tensor y = conv1x1(oracle::random_tensor({3, 2, 2}, rng), Tensor::zeros({2, 3}), Tensor({2}, {0.5, -2.0}));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y[i], 0.5);
    EXPECT_EQ(y[4 + i], -2.0);
  }
}

TEST(Conv1x1, MatchesPerPixelMatmulExactly) {
  std::mt19937_64 rng(9);
  const Tensor x = oracle::random_tensor({3, 2, 2}, rng);
  const Tensor w = oracle::random_tensor({2, 3}, rng), b = oracle::random_tensor({2}, rng);
  const Tensor y = conv1x1(x, w, b);
  const auto ref = oracle::pointwise_conv(x, w, b);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(y[i], ref[i]);

  const Tensor big = oracle::random_tensor({17, 6, 5}, rng);
  const Tensor wb = oracle::random_tensor({9, 17}, rng), bb = oracle::random_tensor({9}, rng);
  const auto ref_big = oracle::pointwise_conv(big, wb, bb);
  const Tensor yb = conv1x1(big, wb, bb);
  for (std::size_t i = 0; i < ref_big.size(); ++i) EXPECT_EQ(yb[i], ref_big[i]);
}

TEST(Conv1x1, ChannelMismatchThrows) {
  EXPECT_THROW(conv1x1(Tensor::zeros({3, 2, 2}), Tensor::zeros({2, 4}), Tensor::zeros({2})), ShapeError);
}

TEST(Resize, ConstantPlaneBitExact) {
  const double v = 0.1 + 0.2;  // not exactly representable halfway values
  const Tensor y = resize_bilinear(Tensor::full({2, 3, 5}, v));
  ASSERT_EQ(y.shape(), (Shape{2, 6, 10}));
  for (double o : y.data()) EXPECT_EQ(o, v);
}

TEST(Resize, SinglePixel) {
  const Tensor y = resize_bilinear(Tensor({1, 1, 1}, {3.25}));
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (double o : y.data()) EXPECT_EQ(o, 3.25);
}

TEST(Resize, HandEvaluatedTwoByTwo) {
  // Source coordinates of outputs 0..3 are clamp(-0.25)=0, 0.25, 0.75, 1.25 -> clamp 1.
  const double expected[4][4] = {{0.0, 0.25, 0.75, 1.0},
                                 {0.5, 0.75, 1.25, 1.5},
                                 {1.5, 1.75, 2.25, 2.5},
                                 {2.0, 2.25, 2.75, 3.0}};
  const Tensor y = resize_bilinear(Tensor({1, 2, 2}, {0, 1, 2, 3}));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at(0, r, c), expected[r][c], 1e-15);
}

TEST(Resize, OnlyFactorTwo) { EXPECT_THROW(resize_bilinear(Tensor::zeros({1, 2, 2}), 3), ShapeError); }

TEST(GradCheck, Quadratic) {
  ParamStore store;
  std::mt19937_64 rng(10);
  const Tensor w = store.normal("w", {3, 4}, 1.0, rng);
  const double err = grad_check([&] { return sum_all(mul(w, w)); }, store);
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, NonFiniteLossThrows) {
  ParamStore store;
  const Tensor w = store.constant("w", {1}, 1.0);
  EXPECT_THROW(grad_check([&]() -> Tensor { throw NumericError("boom"); }, store), NumericError);
  (void)w;
}

TEST(GradCheck, SpatialOps) {
  ParamStore store;
  std::mt19937_64 rng(11);
  const Tensor x = store.normal("x", {2, 4, 4}, 1.0, rng);
  const Tensor w = store.normal("w", {3, 8}, 0.5, rng);
  const Tensor b = store.normal("b", {3}, 0.5, rng);
  const Tensor probe = oracle::random_tensor({3, 4, 4}, rng);
  auto loss = [&] {
    const Tensor s2d = space_to_depth(resize_bilinear(x), 2);                 // [8,4,4]
    const Tensor y = conv1x1(s2d, w, b);                                      // [3,4,4]
    const Tensor z = add(avg_pool2(resize_bilinear(y)), scale(y, 0.5));      // [3,4,4]
    const Tensor d = depth_to_space(concat0({z, z, z, y}), 2);                // [3,8,8]
    return add(sum_all(mul(z, probe)), mean_all(mul(sigmoid(d), softplus(d))));
  };
  EXPECT_LT(grad_check(loss, store), 1e-6);
}

TEST(GradCheck, SpectralTransforms) {
  ParamStore store;
  std::mt19937_64 rng(12);
  const Tensor x = store.normal("x", {2, 4, 6}, 1.0, rng);
  const Tensor probe = oracle::random_tensor({4, 4, 6}, rng);
  const Tensor probe2 = oracle::random_tensor({2, 4, 6}, rng);
  auto loss = [&] {
    const Tensor s = spectral_forward(x);
    return add(sum_all(mul(s, probe)), sum_all(mul(spectral_inverse_real(mul(s, probe)), probe2)));
  };
  EXPECT_LT(grad_check(loss, store), 1e-6);
}

TEST(GradCheck, MatrixOps) {
  ParamStore store;
  std::mt19937_64 rng(13);
  const Tensor a = store.normal("a", {3, 4}, 1.0, rng);
  const Tensor b = store.normal("b", {5, 4}, 1.0, rng);
  const Tensor bias = store.normal("bias", {5}, 1.0, rng);
  const Tensor table = store.normal("table", {6, 4}, 1.0, rng);
  auto loss = [&] {
    const Tensor l = linear(a, b, bias);                       // [3,5]
    const Tensor s = softmax_rows(l);
    const Tensor m = matmul(s, b);                             // [3,4]
    const Tensor t = transpose(matmul_nt(m, gather_rows(table, {0, 2, 2, 5})));
    const Tensor st = sum_stack({m, a, scale(m, -0.5)});
    return add(add(sum_all(mul(t, t)), mean_all(relu(st))), sum_all(mean_rows(select0(stack0({a, m}), 1))));
  };
  EXPECT_LT(grad_check(loss, store), 1e-5);
}

TEST(Tensor, RejectsNonFinite) {
  EXPECT_THROW(Tensor({1}, {std::nan("")}), NumericError);
  EXPECT_THROW(Tensor({2}, {1.0, INFINITY}), NumericError);
  EXPECT_THROW(scale(Tensor({1}, {1e308}), 10.0), NumericError);
}

TEST(Tensor, ShapeMustMatchData) { EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError); }

TEST(Tensor, NoGradGuardSkipsTape) {
  const Tensor w({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(sum_all(w).requires_grad());
  }
  EXPECT_TRUE(sum_all(w).requires_grad());
}

TEST(Tensor, GradientAccumulatesOverSharedInputs) {
  const Tensor w({1}, {3.0}, true);
  const Tensor y = add(mul(w, w), w);  // 2w + 1
  y.backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 7.0);
}

TEST(SumStack, PermutationInvariantBitForBit) {
  std::mt19937_64 rng(14);
  std::vector<Tensor> terms;
  for (int i = 0; i < 6; ++i) terms.push_back(oracle::random_tensor({5, 3}, rng, std::pow(10.0, i - 3)));
  const Tensor a = sum_stack(terms);
  std::reverse(terms.begin(), terms.end());
  std::swap(terms[1], terms[4]);
  const Tensor b = sum_stack(terms);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}
