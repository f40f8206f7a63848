#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "fadnet/core/autograd.hpp"
#include "fadnet/core/fft.hpp"
#include "fadnet/core/haar.hpp"
#include "fadnet/core/ops.hpp"
#include "support.hpp"

using namespace fadnet;
using fadtest::random_tensor;

namespace {

Tensor4<double> ones(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return Tensor4<double>(n, c, h, w, 1.0); }
Tensor4<double> no_bias() { return Tensor4<double>(); }

}  // namespace

// ---- tensor and conv ---------------------------------------------------------

TEST(Tensor, RejectsDataOfWrongLength) {
  EXPECT_THROW(Tensor4<double>(Shape4{1, 1, 2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  const auto x = random_tensor({2, 1, 5, 7}, 1);
  const auto y = conv2d(x, ones(1, 1, 1, 1), vector_tensor<double>(1), 1, 0);
  EXPECT_EQ(y.vec(), x.vec());
}

TEST(Conv2d, AllOnesWindowSums) {
  const auto y = conv2d(ones(1, 1, 4, 4), ones(1, 1, 3, 3), no_bias(), 1, 1);
  ASSERT_EQ(y.shape(), (Shape4{1, 1, 4, 4}));
  EXPECT_EQ(y(0, 0, 1, 1), 9.0);
  EXPECT_EQ(y(0, 0, 2, 2), 9.0);
  EXPECT_EQ(y(0, 0, 0, 1), 6.0);
  EXPECT_EQ(y(0, 0, 2, 3), 6.0);
  EXPECT_EQ(y(0, 0, 0, 0), 4.0);
  EXPECT_EQ(y(0, 0, 3, 3), 4.0);
}

TEST(Conv2d, StrideTwoHalvesExtent) {
  const auto y = conv2d(ones(1, 2, 64, 64), ones(3, 2, 3, 3), no_bias(), 2, 1);
  EXPECT_EQ(y.shape(), (Shape4{1, 3, 32, 32}));
}

TEST(Conv2d, MatchesDirectLoops) {
  for (std::size_t stride : {1u, 2u}) {
    const auto x = random_tensor({2, 3, 9, 8}, 2);
    const auto w = random_tensor({4, 3, 3, 3}, 3);
    const auto b = random_tensor({4, 1, 1, 1}, 4);
    EXPECT_LT(max_abs_diff(conv2d(x, w, b, stride, 1), fadtest::direct_conv(x, w, b, stride, 1)), 1e-12);
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  EXPECT_THROW(conv2d(ones(1, 2, 4, 4), ones(1, 3, 3, 3), no_bias(), 1, 1), ShapeError);
}

TEST(DepthwiseSeparable, DeltaAndIdentityReproduceInput) {
  const auto x = random_tensor({1, 3, 6, 6}, 5);
  Tensor4<double> dw(3, 1, 5, 5), pw(3, 3, 1, 1);
  for (std::size_t c = 0; c < 3; ++c) dw(c, 0, 2, 2) = 1.0, pw(c, c, 0, 0) = 1.0;
  const auto y = depthwise_separable_conv(x, dw, vector_tensor<double>(3), pw, vector_tensor<double>(3), 1, 2);
  EXPECT_LT(max_abs_diff(y, x), 1e-15);
}

TEST(DepthwiseSeparable, ZeroKernelsGiveZero) {
  const auto x = random_tensor({1, 2, 6, 6}, 6);
  const auto y = depthwise_separable_conv(x, Tensor4<double>(2, 1, 5, 5), vector_tensor<double>(2),
                                          Tensor4<double>(2, 2, 1, 1), vector_tensor<double>(2), 1, 2);
  for (double v : y.vec()) EXPECT_EQ(v, 0.0);
}

TEST(DepthwiseSeparable, MatchesDenseComposition) {
  const auto x = random_tensor({1, 2, 6, 6}, 7);
  const auto dw = random_tensor({2, 1, 5, 5}, 8), dwb = random_tensor({2, 1, 1, 1}, 9);
  const auto pw = random_tensor({2, 2, 1, 1}, 10), pwb = random_tensor({2, 1, 1, 1}, 11);
  const auto want = fadtest::direct_conv(fadtest::direct_depthwise(x, dw, dwb, 1, 2), pw, pwb, 1, 0);
  EXPECT_LT(max_abs_diff(depthwise_separable_conv(x, dw, dwb, pw, pwb, 1, 2), want), 1e-12);
}

// ---- FFT and band masks -------------------------------------------------------

TEST(Fft, ImpulseHasFlatSpectrum) {
  Tensor4<double> x(1, 1, 8, 8);
  x[0] = 1.0;
  const auto s = fft2(x);
  for (const auto& v : s.data) EXPECT_NEAR(std::abs(v - s.data[0]), 0.0, 1e-15);
}

TEST(Fft, ConstantHasOnlyDc) {
  const auto s = fft2(Tensor4<double>(1, 1, 8, 16, 2.5));
  for (std::size_t i = 1; i < s.data.size(); ++i) EXPECT_LT(std::abs(s.data[i]), 1e-13);
  EXPECT_GT(std::abs(s.data[0]), 1.0);
}

TEST(Fft, MatchesDirectDftAndPreservesEnergy) {
  const auto x = random_tensor({1, 1, 16, 16}, 12);
  const auto s = fft2(x);
  const std::size_t N = 16;
  double e_sig = 0, e_spec = 0;
  for (std::size_t u = 0; u < N; ++u)
    for (std::size_t v = 0; v < N; ++v) {
      std::complex<double> acc = 0;
      for (std::size_t y = 0; y < N; ++y)
        for (std::size_t xx = 0; xx < N; ++xx) {
          const double ang = -2.0 * std::numbers::pi * static_cast<double>(u * y + v * xx) / static_cast<double>(N);
          acc += x(0, 0, y, xx) * std::polar(1.0, ang);
        }
      acc /= static_cast<double>(N);  // unitary normalization 1/sqrt(hw)
      EXPECT_LT(std::abs(acc - s.at(0, 0, u, v)), 1e-9);
      e_spec += std::norm(s.at(0, 0, u, v));
    }
  for (double v : x.vec()) e_sig += v * v;
  EXPECT_NEAR(e_sig, e_spec, 1e-9);
}

TEST(Fft, RoundTrip) {
  const auto x = random_tensor({2, 3, 8, 32}, 13);
  EXPECT_LT(max_abs_diff(ifft2<double>(fft2(x)), x), 1e-12);
}

TEST(Fft, RejectsNonPowerOfTwo) { EXPECT_THROW(fft2(Tensor4<double>(1, 1, 6, 8)), ShapeError); }

TEST(Fft, RejectsAsymmetricSpectrum) {
  auto s = fft2(random_tensor({1, 1, 8, 8}, 14));
  s.at(0, 0, 1, 2) += std::complex<double>(0.0, 1.0);
  EXPECT_THROW(ifft2<double>(s), NumericError);
}

TEST(BandMasks, DcLowNyquistHighAndPartition) {
  for (double thr : {0.1, 0.5, 1.0, 1.4}) {
    const auto m = radial_band_masks(16, 8, thr);
    EXPECT_EQ(m.low[0], 1);
    if (thr <= 1.0) {
      EXPECT_EQ(m.high[8 * 8], 1);  // (h/2, 0) has radius exactly 1
    }
    for (std::size_t i = 0; i < m.low.size(); ++i) EXPECT_EQ(m.low[i] + m.high[i], 1);
  }
  EXPECT_THROW(radial_band_masks(8, 8, 0.0), std::invalid_argument);
  EXPECT_THROW(radial_band_masks(7, 8, 0.5), ShapeError);
}

TEST(BandMasks, MasksAreSymmetricUnderNegation) {
  const auto m = radial_band_masks(16, 16, 0.5);
  for (std::size_t u = 0; u < 16; ++u)
    for (std::size_t v = 0; v < 16; ++v) EXPECT_EQ(m.low[u * 16 + v], m.low[((16 - u) % 16) * 16 + (16 - v) % 16]);
}

// ---- Haar ---------------------------------------------------------------------

TEST(Haar, ZeroInOut) {
  const auto sb = haar_dwt2(Tensor4<double>(1, 2, 4, 4));
  for (const auto* t : {&sb.ll, &sb.lh, &sb.hl, &sb.hh})
    for (double v : t->vec()) EXPECT_EQ(v, 0.0);
  const auto back = haar_idwt2(sb);
  for (double v : back.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Haar, ConstantGoesToLlOnly) {
  const auto sb = haar_dwt2(Tensor4<double>(1, 1, 4, 6, 1.5));
  for (double v : sb.ll.vec()) EXPECT_EQ(v, 3.0);
  for (const auto* t : {&sb.lh, &sb.hl, &sb.hh})
    for (double v : t->vec()) EXPECT_EQ(v, 0.0);
}

TEST(Haar, SingleBlock) {
  const Tensor4<double> x(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
  const auto sb = haar_dwt2(x);
  EXPECT_EQ(sb.ll[0], 5.0);
  EXPECT_EQ(sb.lh[0], -1.0);
  EXPECT_EQ(sb.hl[0], -2.0);
  EXPECT_EQ(sb.hh[0], 0.0);
  EXPECT_EQ(haar_idwt2(sb).vec(), x.vec());
}

TEST(Haar, RoundTripAndEnergy) {
  const auto x = random_tensor({2, 2, 8, 16}, 15);
  const auto sb = haar_dwt2(x);
  EXPECT_LT(max_abs_diff(haar_idwt2(sb), x), 1e-14);
  const double e = sum_squares(sb.ll) + sum_squares(sb.lh) + sum_squares(sb.hl) + sum_squares(sb.hh);
  EXPECT_NEAR(e, sum_squares(x), 1e-10);
}

TEST(Haar, RejectsOddExtent) { EXPECT_THROW(haar_dwt2(Tensor4<double>(1, 1, 3, 4)), ShapeError); }

// ---- pointwise ops -------------------------------------------------------------

TEST(LeakyRelu, Values) {
  const Tensor4<double> x(Shape4{1, 1, 1, 3}, {3.0, -1.0, 0.0});
  const auto y = leaky_relu(x, 0.01);
  EXPECT_EQ(y[0], 3.0);
  EXPECT_DOUBLE_EQ(y[1], -0.01);
  EXPECT_EQ(y[2], 0.0);
  EXPECT_EQ(leaky_relu(x, 1.0).vec(), x.vec());
}

TEST(BatchNorm, ConstantChannelNormalizesToZero) {
  Tensor4<double> rm = vector_tensor<double>(2), rv = vector_tensor<double>(2, 1.0);
  Tensor4<double> x(2, 2, 3, 3, 4.0);
  const auto y = batch_norm(x, vector_tensor<double>(2, 1.0), vector_tensor<double>(2), rm, rv, Mode::train);
  for (double v : y.vec()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, StandardizedInputPassesThrough) {
  Tensor4<double> x(Shape4{1, 1, 2, 2}, {1, -1, 1, -1});
  Tensor4<double> rm = vector_tensor<double>(1), rv = vector_tensor<double>(1, 1.0);
  const auto y = batch_norm(x, vector_tensor<double>(1, 1.0), vector_tensor<double>(1), rm, rv, Mode::train);
  EXPECT_LT(max_abs_diff(y, x), 1e-5);
  // momentum 0.1 toward mean 0 and unbiased variance 4/3
  EXPECT_NEAR(rm[0], 0.0, 1e-15);
  EXPECT_NEAR(rv[0], 0.9 + 0.1 * 4.0 / 3.0, 1e-12);
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  Tensor4<double> x(Shape4{1, 1, 2, 2}, {0.5, 1.0, 2.0, -3.0});
  Tensor4<double> rm = vector_tensor<double>(1, 0.25), rv = vector_tensor<double>(1, 2.0);
  const Tensor4<double> g = vector_tensor<double>(1, 1.5), b = vector_tensor<double>(1, -0.5);
  const auto y = batch_norm(x, g, b, rm, rv, Mode::eval);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], (x[i] - 0.25) / std::sqrt(2.0 + 1e-5) * 1.5 - 0.5, 1e-15);
  EXPECT_EQ(rm[0], 0.25);
  EXPECT_EQ(rv[0], 2.0);
}

TEST(Dropout, IdentityCasesAndExpectation) {
  const auto x = random_tensor({1, 1, 4, 4}, 16);
  EXPECT_EQ(dropout(x, 0.0, Mode::train, 1).vec(), x.vec());
  EXPECT_EQ(dropout(x, 0.3, Mode::eval, 1).vec(), x.vec());
  const auto y = dropout(Tensor4<double>(1, 1, 1, 100000, 1.0), 0.3, Mode::train, 99);
  double mean = 0;
  for (double v : y.vec()) mean += v;
  EXPECT_NEAR(mean / 1e5, 1.0, 0.01);
  EXPECT_EQ(dropout(x, 0.3, Mode::train, 5).vec(), dropout(x, 0.3, Mode::train, 5).vec());
  EXPECT_THROW(dropout(x, 1.0, Mode::train, 5), std::invalid_argument);
}

TEST(Upsample, ReplicatesBlocks) {
  const Tensor4<double> x(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
  const auto y = nearest_upsample(x);
  const std::vector<double> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  EXPECT_EQ(y.vec(), want);
  EXPECT_EQ(nearest_upsample(Tensor4<double>(1, 1, 1, 1, 7.0)).vec(), std::vector<double>(4, 7.0));
}

TEST(MseLoss, Values) {
  const auto x = random_tensor({1, 1, 2, 5}, 17);
  EXPECT_EQ(mse_loss(x, x), 0.0);
  EXPECT_EQ(mse_loss(Tensor4<double>(1, 1, 2, 2, 1.0), Tensor4<double>(1, 1, 2, 2)), 1.0);
  const auto t = random_tensor({1, 1, 2, 5}, 18);
  double s = 0;
  for (std::size_t i = 0; i < 10; ++i) s += (x[i] - t[i]) * (x[i] - t[i]);
  EXPECT_NEAR(mse_loss(x, t), s / 10.0, 1e-15);
}

// ---- tape ----------------------------------------------------------------------

TEST(Tape, UnusedLeafGetsZeroGradient) {
  Tape<double> t;
  auto a = t.leaf(random_tensor({1, 1, 2, 2}, 45), true);
  auto b = t.leaf(random_tensor({1, 1, 2, 2}, 46), true);
  auto out = ag::dot(a, Tensor4<double>(1, 1, 2, 2, 1.0));
  t.backward(out);
  for (double v : t.grad(b.id).vec()) EXPECT_EQ(v, 0.0);
  for (double v : t.grad(a.id).vec()) EXPECT_EQ(v, 1.0);
}
