#include "hgs/parallel.hpp"
#include "hgs/renderer.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace hgs;

namespace {

Camera axis_camera(int w, int h, double f) {
  Camera c;
  c.fx = c.fy = f;
  c.cx = (w - 1) / 2.0;
  c.cy = (h - 1) / 2.0;
  c.width = w;
  c.height = h;
  return c;
}

std::vector<Splat2D> project_all(const GaussianCloud& cloud, const Camera& cam) {
  std::vector<Splat2D> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto s = project_gaussian(cam, activate(cloud, i), static_cast<int>(i))) out.push_back(*s);
  }
  return out;
}

struct Config {
  GaussianCloud cloud;
  Camera camera;
  Vec3 background;
};

Config random_config(std::uint64_t seed, std::size_t n, int size) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Config c;
  c.cloud = oracle::random_cloud(rng, n, Vec3::Zero(), 0.7, 0.05, 0.3);
  c.camera = oracle::camera_at(Vec3(2.5, 1.0, 0.8), size, size);
  c.background = Vec3(u(rng), u(rng), u(rng));
  return c;
}

}  // namespace

TEST(Project, OnAxisIsotropicCovariance) {
  const double f = 50.0, sigma = 0.1, z = 2.0;
  const Camera cam = axis_camera(64, 64, f);
  ActivatedGaussian g{Vec3(0, 0, z), sigma * sigma * Mat3::Identity(), 0.8, Vec3(1, 0, 0)};
  const auto s = project_gaussian(cam, g, 0);
  ASSERT_TRUE(s);
  const double v = std::pow(f * sigma / z, 2) + 0.3;
  EXPECT_NEAR(s->conic_a, 1.0 / v, 1e-12);
  EXPECT_NEAR(s->conic_c, 1.0 / v, 1e-12);
  EXPECT_NEAR(s->conic_b, 0.0, 1e-15);
  EXPECT_NEAR(s->radius, 3.0 * std::sqrt(v), 1e-9);
  EXPECT_EQ(s->mean2d, Vec2(31.5, 31.5));
}

TEST(Project, BehindCameraOrOffImageIsAbsent) {
  const Camera cam = axis_camera(32, 32, 40.0);
  ActivatedGaussian g{Vec3(0, 0, -1), 0.01 * Mat3::Identity(), 0.8, Vec3::Ones()};
  EXPECT_FALSE(project_gaussian(cam, g, 0));
  g.mean = Vec3(100, 0, 1);
  EXPECT_FALSE(project_gaussian(cam, g, 0));
}

TEST(Project, ConicMatchesDenseInverse) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto cfg = random_config(100 + t, 1, 32);
    const ActivatedGaussian g = activate(cfg.cloud, 0);
    const auto s = project_gaussian(cfg.camera, g, 0);
    if (!s) continue;
    const Vec3 tc = cfg.camera.rotation * g.mean + cfg.camera.translation;
    Eigen::Matrix<double, 2, 3> J;
    J << cfg.camera.fx / tc.z(), 0, -cfg.camera.fx * tc.x() / (tc.z() * tc.z()), 0, cfg.camera.fy / tc.z(),
        -cfg.camera.fy * tc.y() / (tc.z() * tc.z());
    const Mat2 cov2 = J * cfg.camera.rotation * g.cov * cfg.camera.rotation.transpose() * J.transpose() +
                      0.3 * Mat2::Identity();
    const Mat2 inv = cov2.inverse();
    EXPECT_NEAR(s->conic_a, inv(0, 0), 1e-8 * std::max(1.0, std::abs(inv(0, 0))));
    EXPECT_NEAR(s->conic_b, inv(0, 1), 1e-8 * std::max(1.0, std::abs(inv(0, 0))));
    EXPECT_NEAR(s->conic_c, inv(1, 1), 1e-8 * std::max(1.0, std::abs(inv(1, 1))));
    EXPECT_GT(s->conic_a, 0.0);
    EXPECT_GT(s->conic_a * s->conic_c - s->conic_b * s->conic_b, 0.0);

    // The finite-difference Jacobian route agrees as well.
    const auto o = oracle::project_oracle(cfg.camera, g.mean, g.cov);
    EXPECT_LT((o.mean2d - s->mean2d).norm(), 1e-9);
    EXPECT_LT((o.conic - inv).cwiseAbs().maxCoeff(), 1e-5 * inv.cwiseAbs().maxCoeff());
  }
}

TEST(Rasterize, EmptyIsBackground) {
  const Camera cam = axis_camera(20, 12, 10.0);
  const Vec3 bg(0.2, 0.4, 0.6);
  const auto r = rasterize({}, cam, bg, 3);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 20; ++x) EXPECT_EQ(r.image.pixel(x, y), bg);
  }
  EXPECT_TRUE(std::all_of(r.rendered_index.begin(), r.rendered_index.end(), [](int v) { return v == -1; }));
  EXPECT_TRUE(std::all_of(r.final_transmittance.begin(), r.final_transmittance.end(),
                          [](double v) { return v == 1.0; }));
  EXPECT_EQ(r.pixel_counts, std::vector<std::int64_t>(3, 0));
}

TEST(Rasterize, OpaqueSplatAtCenterPixel) {
  const Camera cam = axis_camera(16, 16, 10.0);
  Splat2D s;
  s.mean2d = Vec2(8, 8);
  s.conic_a = s.conic_c = 0.5;
  s.depth = 1.0;
  s.opacity = 0.999999;
  s.color = Vec3(1.0, 0.5, 0.0);
  s.gaussian_index = 0;
  s.support_radius = 20.0;
  const Vec3 bg(0, 0, 1);
  const auto r = rasterize({s}, cam, bg);
  EXPECT_LT((r.image.pixel(8, 8) - (0.99 * s.color + 0.01 * bg)).norm(), 1e-12);
  EXPECT_EQ(r.rendered_index[8 * 16 + 8], 0);
}

TEST(Rasterize, MatchesNaiveOracleWithoutEarlyStop) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto cfg = random_config(seed, 5, 16);
    const auto splats = project_all(cfg.cloud, cfg.camera);
    const auto r = rasterize(splats, cfg.camera, cfg.background, cfg.cloud.size());
    const auto o = oracle::naive_rasterize(splats, 16, 16, cfg.background, cfg.cloud.size(), false);
    for (std::size_t i = 0; i < r.image.data().size(); ++i) {
      EXPECT_NEAR(r.image.data()[i], o.image.data()[i], 1e-5);
    }
    EXPECT_EQ(r.rendered_index, o.rendered_index);
    EXPECT_EQ(r.pixel_counts, o.pixel_counts);
  }
}

TEST(Rasterize, MatchesNaiveOracleWithEarlyStopExactly) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto cfg = random_config(seed, 40, 24);
    const auto splats = project_all(cfg.cloud, cfg.camera);
    const auto r = rasterize(splats, cfg.camera, cfg.background, cfg.cloud.size());
    const auto o = oracle::naive_rasterize(splats, 24, 24, cfg.background, cfg.cloud.size(), true);
    for (std::size_t i = 0; i < r.image.data().size(); ++i) {
      EXPECT_NEAR(r.image.data()[i], o.image.data()[i], 1e-12);
    }
    EXPECT_EQ(r.rendered_index, o.rendered_index);
    EXPECT_EQ(r.pixel_counts, o.pixel_counts);
    EXPECT_EQ(r.visible, o.visible);
  }
}

TEST(Rasterize, EarlyStopStaysWithinBound) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto cfg = random_config(seed, 60, 24);
    const auto splats = project_all(cfg.cloud, cfg.camera);
    const auto r = rasterize(splats, cfg.camera, cfg.background, cfg.cloud.size());
    const auto o = oracle::naive_rasterize(splats, 24, 24, cfg.background, cfg.cloud.size(), false);
    const double bound = 1e-4 * std::max(1.0, cfg.background.maxCoeff());
    for (std::size_t i = 0; i < r.image.data().size(); ++i) {
      EXPECT_LE(std::abs(r.image.data()[i] - o.image.data()[i]), bound);
    }
  }
}

TEST(Rasterize, InvariantsHold) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto cfg = random_config(seed, 30, 32);
    const auto r = render_view(cfg.cloud, cfg.camera, cfg.background);
    std::vector<std::int64_t> counts(cfg.cloud.size(), 0);
    std::vector<bool> visible(cfg.cloud.size(), false);
    for (std::size_t p = 0; p < r.rendered_index.size(); ++p) {
      double wsum = 0.0, prev_t = 1.0, best = -1.0;
      int best_i = -1;
      for (std::size_t k = r.contrib_offsets[p]; k < r.contrib_offsets[p + 1]; ++k) {
        const auto& c = r.contribs[k];
        EXPECT_GE(c.weight, 0.0);
        EXPECT_LE(c.transmittance, prev_t);
        prev_t = c.transmittance;
        wsum += c.weight;
        if (c.weight > best || (c.weight == best && c.gaussian_index < best_i)) {
          best = c.weight;
          best_i = c.gaussian_index;
        }
        if (c.weight > 0.0) visible[c.gaussian_index] = true;
      }
      EXPECT_NEAR(wsum + r.final_transmittance[p], 1.0, 1e-5);
      EXPECT_EQ(r.rendered_index[p], best_i);
      if (best_i >= 0) ++counts[best_i];
    }
    EXPECT_EQ(counts, r.pixel_counts);
    EXPECT_EQ(visible, r.visible);
    std::int64_t total = 0;
    for (auto c : r.pixel_counts) total += c;
    EXPECT_LE(total, 32 * 32);
  }
}

TEST(Rasterize, PermutationInvariant) {
  const auto cfg = random_config(7, 25, 32);
  auto splats = project_all(cfg.cloud, cfg.camera);
  const auto a = rasterize(splats, cfg.camera, cfg.background, cfg.cloud.size());
  std::mt19937_64 rng(1);
  std::shuffle(splats.begin(), splats.end(), rng);
  const auto b = rasterize(splats, cfg.camera, cfg.background, cfg.cloud.size());
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.rendered_index, b.rendered_index);
  EXPECT_EQ(a.pixel_counts, b.pixel_counts);
}

TEST(Rasterize, EqualDepthTieBreaksOnIndex) {
  const Camera cam = axis_camera(16, 16, 10.0);
  Splat2D s;
  s.mean2d = Vec2(7, 7);
  s.conic_a = s.conic_c = 0.1;
  s.depth = 1.0;
  s.opacity = 0.5;
  s.color = Vec3(1, 0, 0);
  s.support_radius = 30.0;
  Splat2D t = s;
  t.color = Vec3(0, 1, 0);
  s.gaussian_index = 1;
  t.gaussian_index = 0;
  const auto r = rasterize({s, t}, cam, Vec3::Zero());
  // Index 0 blends first and wins with the larger weight.
  EXPECT_EQ(r.rendered_index[7 * 16 + 7], 0);
  EXPECT_GT(r.image.pixel(7, 7).y(), r.image.pixel(7, 7).x());
}

TEST(Render, DeterministicAcrossThreadCounts) {
  const auto cfg = random_config(3, 80, 48);
  set_thread_count(1);
  const auto a = render_view(cfg.cloud, cfg.camera, cfg.background);
  set_thread_count(4);
  const auto b = render_view(cfg.cloud, cfg.camera, cfg.background);
  set_thread_count(0);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.rendered_index, b.rendered_index);
  EXPECT_EQ(a.pixel_counts, b.pixel_counts);
  EXPECT_EQ(a.contribs.size(), b.contribs.size());
  EXPECT_EQ(a.token, b.token);
}

TEST(Render, DoubledResolutionKeepsVisibility) {
  std::mt19937_64 rng(5);
  GaussianCloud cloud = oracle::random_cloud(rng, 12, Vec3::Zero(), 0.6, 0.12, 0.3);
  // One Gaussian behind the camera and one far off to the side.
  cloud.push_back(Vec3(6, 2, 2), Vec3::Constant(std::log(0.1)), Quat(1, 0, 0, 0), 1.0, Vec3::Ones());
  cloud.push_back(Vec3(0, 9, 0), Vec3::Constant(std::log(0.1)), Quat(1, 0, 0, 0), 1.0, Vec3::Ones());
  Camera lo = oracle::camera_at(Vec3(3, 1, 1), 24, 24);
  Camera hi = lo;
  hi.width = hi.height = 48;
  hi.fx *= 2;
  hi.fy *= 2;
  hi.cx = 2 * lo.cx + 0.5;
  hi.cy = 2 * lo.cy + 0.5;
  const auto a = render_view(cloud, lo, Vec3::Zero());
  const auto b = render_view(cloud, hi, Vec3::Zero());
  EXPECT_EQ(a.visible, b.visible);
  EXPECT_FALSE(a.visible[12]);
  EXPECT_FALSE(a.visible[13]);
}

TEST(Render, TokenTracksInputs) {
  const auto cfg = random_config(2, 5, 16);
  const auto t = render_token(cfg.cloud, cfg.camera, cfg.background);
  GaussianCloud moved = cfg.cloud;
  moved.means[0].x() += 1e-9;
  EXPECT_NE(t, render_token(moved, cfg.camera, cfg.background));
  EXPECT_NE(t, render_token(cfg.cloud, cfg.camera, Vec3::Ones()));
}
