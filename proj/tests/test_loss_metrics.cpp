#include "hgs/error.hpp"
#include "hgs/loss_metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace hgs;

namespace {

Image random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h);
  for (double& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST(L1, ClosedForms) {
  std::mt19937_64 rng(1);
  const Image gt = random_image(rng, 12, 9);
  const auto same = l1_loss(gt, gt);
  EXPECT_EQ(same.value, 0.0);
  for (double v : same.d_image.data()) EXPECT_EQ(v, 0.0);
  Image up = gt;
  for (double& v : up.data()) v += 0.5;
  const auto r = l1_loss(up, gt);
  EXPECT_NEAR(r.value, 0.5, 1e-12);
  for (double v : r.d_image.data()) EXPECT_DOUBLE_EQ(v, 1.0 / (12 * 9 * 3));
}

TEST(L1, MatchesLoopOracleAndRejectsMismatch) {
  std::mt19937_64 rng(2);
  const Image a = random_image(rng, 20, 10), b = random_image(rng, 20, 10);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  EXPECT_NEAR(l1_loss(a, b).value, s / a.data().size(), 1e-9);
  EXPECT_THROW(l1_loss(a, Image(10, 20)), Error);
}

TEST(Ssim, IdenticalIsOneAndSymmetric) {
  std::mt19937_64 rng(3);
  const Image a = random_image(rng, 20, 16), b = random_image(rng, 20, 16);
  for (double v : ssim_map(a, a).values) EXPECT_EQ(v, 1.0);
  const auto ab = ssim_map(a, b), ba = ssim_map(b, a);
  for (std::size_t i = 0; i < ab.values.size(); ++i) {
    EXPECT_NEAR(ab.values[i], ba.values[i], 1e-15);
    EXPECT_GE(ab.values[i], -1.0);
    EXPECT_LE(ab.values[i], 1.0);
  }
}

TEST(Ssim, MatchesScalarOracle) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 5; ++t) {
    const Image a = random_image(rng, 23, 17), b = random_image(rng, 23, 17);
    const auto got = ssim_map(a, b);
    const auto expect = oracle::ssim_scalar(a, b);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(got.values[i], expect[i], 1e-9);
  }
}

TEST(Ssim, ConstantImagesCollapseToLuminance) {
  const double a = 0.3, b = 0.7;
  const auto m = ssim_map(Image(16, 16, a), Image(16, 16, b));
  const double expect = (2 * a * b + kSsimC1) / (a * a + b * b + kSsimC1);
  for (double v : m.values) EXPECT_NEAR(v, expect, 1e-12);
}

TEST(Ssim, InvertedCheckerboardIsNonPositive) {
  Image gt(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) gt.set_pixel(x, y, Vec3::Constant((x + y) % 2 == 0 ? 1.0 : 0.0));
  }
  Image inv = gt;
  for (double& v : inv.data()) v = 1.0 - v;
  const auto m = ssim_map(inv, gt);
  const auto o = oracle::ssim_scalar(inv, gt);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    EXPECT_LE(m.values[i], 0.0);
    EXPECT_NEAR(m.values[i], o[i], 1e-9);
  }
}

TEST(Ssim, TooSmallIsInvalidInput) {
  try {
    ssim_map(Image(8, 8), Image(8, 8));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
}

TEST(Ssim, MeanOfMapMatchesDssim) {
  std::mt19937_64 rng(5);
  const Image a = random_image(rng, 16, 16), b = random_image(rng, 16, 16);
  SsimMap m;
  const auto d = dssim_loss(a, b, &m);
  EXPECT_NEAR(1.0 - d.value, m.mean(), 1e-12);
  EXPECT_NEAR(m.mean(), ssim_map(a, b).mean(), 1e-12);
}

TEST(CombinedLoss, EndpointsAndContinuity) {
  std::mt19937_64 rng(6);
  const Image a = random_image(rng, 16, 16), b = random_image(rng, 16, 16);
  const auto c0 = combined_loss(a, b, 0.0);
  const auto l1 = l1_loss(a, b);
  EXPECT_EQ(c0.value, l1.value);
  EXPECT_EQ(c0.d_image, l1.d_image);
  EXPECT_EQ(combined_loss(a, a, 1.0).value, 0.0);
  EXPECT_LE(std::abs(combined_loss(a, b, 0.3).value - combined_loss(a, b, 0.3 + 1e-6).value), 1e-5);
}

// The smallest image the 11x11 window accepts.
TEST(CombinedLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const Image gt = random_image(rng, 11, 11);
  Image img = random_image(rng, 11, 11);
  // Keep away from the L1 kink.
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    if (std::abs(img.data()[i] - gt.data()[i]) < 0.05) img.data()[i] = gt.data()[i] + 0.1;
  }
  const auto g = combined_loss(img, gt, 0.2);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    Image p = img, m = img;
    p.data()[i] += eps;
    m.data()[i] -= eps;
    const double fd = (combined_loss(p, gt, 0.2).value - combined_loss(m, gt, 0.2).value) / (2 * eps);
    EXPECT_NEAR(g.d_image.data()[i], fd, 1e-4 * std::abs(fd)) << i;
  }
}

TEST(Psnr, ClosedFormsAndOracle) {
  EXPECT_NEAR(psnr(Image(8, 8, 0.1), Image(8, 8, 0.0)), 20.0, 1e-12);
  EXPECT_EQ(psnr(Image(8, 8, 0.4), Image(8, 8, 0.4)), kPsnrSentinel);
  std::mt19937_64 rng(8);
  const Image a = random_image(rng, 19, 7), b = random_image(rng, 19, 7);
  EXPECT_NEAR(psnr(a, b), oracle::psnr_scalar(a, b), 1e-9);
}

TEST(Metrics, InvariantUnderSharedPixelPermutation) {
  std::mt19937_64 rng(9);
  const Image a = random_image(rng, 12, 12), b = random_image(rng, 12, 12);
  std::vector<int> perm(144);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Image pa(12, 12), pb(12, 12);
  for (int i = 0; i < 144; ++i) {
    pa.set_pixel(i % 12, i / 12, a.pixel(perm[i] % 12, perm[i] / 12));
    pb.set_pixel(i % 12, i / 12, b.pixel(perm[i] % 12, perm[i] / 12));
  }
  EXPECT_NEAR(l1_loss(a, b).value, l1_loss(pa, pb).value, 1e-12);
  EXPECT_NEAR(psnr(a, b), psnr(pa, pb), 1e-9);
}
