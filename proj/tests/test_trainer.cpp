#include "hgs/error.hpp"
#include "hgs/loss_metrics.hpp"
#include "hgs/trainer.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace hgs;
namespace fs = std::filesystem;

namespace {

SyntheticScene small_scene(std::uint64_t seed = 3) {
  SceneSpec spec;
  spec.width = spec.height = 32;
  spec.views = 8;
  spec.gt_gaussians = 80;
  return gen_synthetic(spec, seed);
}

TrainConfig short_config(Policy policy) {
  TrainConfig c;
  c.total_iters = 120;
  c.eval_every = 40;
  c.seed = 5;
  c.policy_config.policy = policy;
  c.policy_config.densify_start = 40;
  c.policy_config.interval = 20;
  c.policy_config.densify_end = 100;
  return c;
}

std::string report_text(const TrainReport& r) {
  std::ostringstream s;
  write_report_csv(s, r);
  write_growth_log_csv(s, r.growth_log);
  s << report_json(r).dump();
  return s.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hgs_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Train, NoIntervalsKeepsCountConstant) {
  const auto s = small_scene();
  const auto init = init_cloud(s.scene, 60, InitMode::GtSubsample, 1, &s.gt_cloud);
  TrainConfig c = short_config(Policy::Hgs);
  c.policy_config.densify_start = 100;
  c.policy_config.densify_end = 50;
  const auto r = train(s.scene, init, c);
  EXPECT_TRUE(r.growth_log.empty());
  EXPECT_EQ(r.final_cloud.size(), 60u);
  for (const auto& rec : r.records) EXPECT_EQ(rec.n_gaussians, 60u);
  ASSERT_EQ(r.records.size(), 3u);
  for (std::size_t i = 1; i < r.records.size(); ++i) EXPECT_GT(r.records[i].iteration, r.records[i - 1].iteration);
  EXPECT_EQ(r.records.back().iteration, 120);
}

TEST(Train, SingleGaussianFitsConstantViewMonotonically) {
  Scene scene;
  const Vec3 target(0.8, 0.3, 0.2);
  for (int v = 0; v < 2; ++v) {
    scene.cameras.push_back(oracle::camera_at(Vec3(3.0, v == 0 ? 0.3 : -0.3, 0.5), 16, 16, v));
    scene.gt_images.emplace_back(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) scene.gt_images.back().set_pixel(x, y, target);
    scene.split.push_back(Split::Train);
  }
  scene.extent = camera_bounds(scene.cameras).second;
  GaussianCloud init;
  init.push_back(Vec3::Zero(), Vec3::Constant(std::log(1.5)), Quat(1, 0, 0, 0), logit(0.3), Vec3(0.4, 0.4, 0.4));

  TrainConfig c;
  c.total_iters = 200;
  c.eval_every = 200;
  c.checkpoint_every = 1;
  c.policy_config.densify_start = 1000;
  c.policy_config.densify_end = 0;
  std::vector<double> losses;
  auto mean_loss = [&](const GaussianCloud& cloud) {
    double l = 0.0;
    for (std::size_t v = 0; v < 2; ++v) {
      l += combined_loss(render_view(cloud, scene.cameras[v], scene.background).image, scene.gt_images[v],
                         c.lambda_ssim).value;
    }
    return l / 2.0;
  };
  losses.push_back(mean_loss(init));
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const TrainState& st) { losses.push_back(mean_loss(st.cloud)); };
  train(scene, init, c, hooks);
  ASSERT_EQ(losses.size(), 201u);
  for (std::size_t t = 0; t + 50 < losses.size(); ++t) EXPECT_LT(losses[t + 50], losses[t]) << "window at " << t;
  EXPECT_LT(losses.back(), 0.5 * losses.front());
}

TEST(Train, SameSeedSameReport) {
  const auto s = small_scene();
  const auto init = init_cloud(s.scene, 60, InitMode::GtSubsample, 1, &s.gt_cloud);
  const TrainConfig c = short_config(Policy::Hgs);
  const auto a = train(s.scene, init, c);
  const auto b = train(s.scene, init, c);
  EXPECT_EQ(report_text(a), report_text(b));
  EXPECT_EQ(a.final_cloud, b.final_cloud);
  EXPECT_FALSE(a.growth_log.empty());
  TrainConfig other = c;
  other.seed = 6;
  EXPECT_NE(train(s.scene, init, other).final_cloud, a.final_cloud);
}

TEST(Train, CheckpointResumeIsExact) {
  const auto s = small_scene();
  const auto init = init_cloud(s.scene, 60, InitMode::GtSubsample, 1, &s.gt_cloud);
  const TrainConfig c = short_config(Policy::Hgs);
  const auto full = train(s.scene, init, c);

  const fs::path dir = temp_dir("resume");
  TrainState st = initial_state(init, c);
  TrainHooks hooks;
  hooks.stop_after = 70;
  run_training(s.scene, st, c, hooks);
  EXPECT_EQ(st.iteration, 70);
  save_checkpoint(dir / "mid", st, c);
  TrainState loaded = load_checkpoint(dir / "mid.json", c);
  EXPECT_EQ(loaded.cloud, st.cloud);
  EXPECT_EQ(loaded.adam, st.adam);
  EXPECT_EQ(loaded.stats, st.stats);
  run_training(s.scene, loaded, c);
  TrainReport resumed{c, loaded.records, loaded.growth_log, loaded.cloud};
  EXPECT_EQ(report_text(resumed), report_text(full));
  EXPECT_EQ(resumed.final_cloud, full.final_cloud);

  TrainConfig changed = c;
  changed.lambda_ssim = 0.3;
  EXPECT_THROW(load_checkpoint(dir / "mid.json", changed), Error);
  EXPECT_NO_THROW(load_checkpoint(dir / "mid.json", changed, true));
  fs::remove_all(dir);
}

TEST(Train, NanLossAbortsWithDump) {
  const auto s = small_scene();
  auto init = init_cloud(s.scene, 20, InitMode::GtSubsample, 1, &s.gt_cloud);
  for (auto& col : init.colors) col = Vec3::Constant(std::nan(""));
  const fs::path dir = temp_dir("diverge");
  TrainHooks hooks;
  hooks.dump_dir = dir;
  try {
    train(s.scene, init, short_config(Policy::Og), hooks);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Diverged);
  }
  EXPECT_TRUE(fs::exists(dir / "diverged.hgscloud"));
  EXPECT_TRUE(fs::exists(dir / "diverged.json"));
  fs::remove_all(dir);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = short_config(Policy::EffiHgs);
  c.lr_colors = 1e-3;
  c.policy_config.tau_ssim = 0.6;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  c.total_iters = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.lr_scales = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(EpochOrder, IsSeededPermutation) {
  const std::vector<std::size_t> views = {1, 2, 3, 5, 6, 7, 9, 10};
  auto a = epoch_order(views, 1, 0);
  EXPECT_EQ(a, epoch_order(views, 1, 0));
  EXPECT_NE(a, epoch_order(views, 1, 1));
  std::sort(a.begin(), a.end());
  EXPECT_EQ(a, views);
}

TEST(Evaluate, GroundTruthCloudIsNearExact) {
  const auto s = gen_synthetic(SceneSpec{}, 7);
  const auto e = evaluate(s.gt_cloud, s.scene, Split::Test);
  EXPECT_GE(e.psnr, 60.0);
  EXPECT_NEAR(e.ssim, 1.0, 1e-6);
}

TEST(Evaluate, EmptyCloudOnBlackIsSentinel) {
  auto s = small_scene();
  for (auto& img : s.scene.gt_images) img = Image(img.width(), img.height());
  const auto e = evaluate(GaussianCloud{}, s.scene, Split::Test);
  EXPECT_EQ(e.psnr, kPsnrSentinel);
  EXPECT_DOUBLE_EQ(e.ssim, 1.0);
}

TEST(Evaluate, MatchesPerViewLoopOracle) {
  auto s = small_scene();
  s.scene.split = {Split::Train, Split::Test, Split::Train, Split::Train,
                   Split::Train, Split::Train, Split::Test, Split::Train};
  std::mt19937_64 rng(9);
  const auto cloud = oracle::random_cloud(rng, 40, Vec3::Zero(), 0.8, 0.03, 0.15);
  double p = 0.0, q = 0.0;
  for (std::size_t v : {1u, 6u}) {
    const Image img = render_view(cloud, s.scene.cameras[v], s.scene.background).image;
    p += oracle::psnr_scalar(img, s.scene.gt_images[v]);
    const auto m = oracle::ssim_scalar(img, s.scene.gt_images[v]);
    double sum = 0.0;
    for (double x : m) sum += x;
    q += sum / static_cast<double>(m.size());
  }
  const auto e = evaluate(cloud, s.scene, Split::Test);
  EXPECT_NEAR(e.psnr, p / 2.0, 1e-9);
  EXPECT_NEAR(e.ssim, q / 2.0, 1e-9);
}

TEST(Evaluate, EmptySplitThrows) {
  auto s = small_scene();
  s.scene.split.assign(s.scene.size(), Split::Train);
  EXPECT_THROW(evaluate(GaussianCloud{}, s.scene, Split::Test), Error);
}
