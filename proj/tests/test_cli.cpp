#include "hgs/cli.hpp"
#include "hgs/cloud_io.hpp"
#include "hgs/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

using namespace hgs;
namespace fs = std::filesystem;

namespace {

int run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> owned = {"hgs"};
  owned.insert(owned.end(), args);
  std::vector<const char*> argv;
  for (const auto& a : owned) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hgs_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string dir_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + slurp(f);
  return all;
}

cli::LoadedScene small_loaded() {
  cli::SceneSource src;
  src.spec.width = src.spec.height = 32;
  src.spec.views = 8;
  src.spec.gt_gaussians = 80;
  return cli::load_scene_source(src);
}

}  // namespace

TEST(GenScene, WritesViewsAndIsDeterministic) {
  const fs::path root = temp_dir("gen");
  ASSERT_EQ(run_cli({"gen-scene", "--views", "16", "--size", "64", "--gaussians", "300", "--seed", "7",
                     (root / "a").string()}),
            0);
  ASSERT_EQ(run_cli({"gen-scene", "--views", "16", "--size", "64", "--gaussians", "300", "--seed", "7",
                     (root / "b").string()}),
            0);
  int pngs = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 16);
  std::ifstream cams(root / "a" / "cameras.json");
  const auto j = nlohmann::json::parse(cams);
  const auto& list = j.is_array() ? j : j.at("cameras");
  EXPECT_EQ(list.size(), 16u);
  EXPECT_TRUE(fs::exists(root / "a" / "gt.hgscloud"));
  EXPECT_EQ(dir_digest(root / "a"), dir_digest(root / "b"));
  fs::remove_all(root);
}

TEST(GenScene, RejectsTooFewViews) {
  const fs::path root = temp_dir("gen2");
  EXPECT_EQ(run_cli({"gen-scene", "--views", "2", (root / "a").string()}), 2);
  fs::remove_all(root);
}

TEST(Train, UnknownPolicyIsUsageError) {
  EXPECT_EQ(run_cli({"train", "--policy", "3dgs", "--iters", "1"}), 2);
  EXPECT_EQ(run_cli({"train", "--no-such-flag"}), 2);
  EXPECT_EQ(run_cli({}), 2);
}

TEST(Train, CountConstantAfterDensifyEndAndResumeMatches) {
  const fs::path root = temp_dir("train");
  ASSERT_EQ(run_cli({"gen-scene", "--views", "8", "--size", "32", "--gaussians", "80", (root / "scene").string()}), 0);
  const std::vector<std::string> common = {"train", (root / "scene").string(), "--policy", "og", "--iters", "300",
                                           "--seed", "1", "--eval-every", "50", "--interval", "50",
                                           "--densify-start", "50", "--densify-end", "150", "--tau-grad", "5e-5", "--init-count", "50"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = common;
    a.insert(a.end(), extra.begin(), extra.end());
    std::vector<const char*> argv = {"hgs"};
    for (const auto& s : a) argv.push_back(s.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
  };
  ASSERT_EQ(with({"--out", (root / "full").string()}), 0);
  std::ifstream rj(root / "full" / "report.json");
  const auto report = nlohmann::json::parse(rj);
  std::size_t n_at_end = 0;
  for (const auto& r : report.at("records")) {
    if (r.at("iteration").get<int>() == 150) n_at_end = r.at("n_gaussians");
    if (r.at("iteration").get<int>() > 150) EXPECT_EQ(r.at("n_gaussians").get<std::size_t>(), n_at_end);
  }
  EXPECT_GT(n_at_end, 0u);

  ASSERT_EQ(with({"--out", (root / "part").string(), "--stop-after", "120"}), 0);
  ASSERT_EQ(with({"--out", (root / "part").string(), "--resume", (root / "part" / "final.json").string()}), 0);
  for (const char* f : {"report.csv", "report.json", "growth_log.csv", "final.hgscloud"}) {
    EXPECT_EQ(slurp(root / "part" / f), slurp(root / "full" / f)) << f;
  }
  fs::remove_all(root);
}

TEST(Train, ConfigFileSetsOptionsAndFlagsOverride) {
  const fs::path root = temp_dir("config");
  ASSERT_EQ(run_cli({"gen-scene", "--views", "8", "--size", "32", "--gaussians", "40", (root / "scene").string()}), 0);
  std::ofstream(root / "run.toml") << "[train]\niters = 30\neval-every = 10\npolicy = \"hgs\"\n";
  ASSERT_EQ(run_cli({"--config", (root / "run.toml").string(), "train", (root / "scene").string(), "--eval-every",
                     "15", "--init-count", "30", "--out", (root / "out").string()}),
            0);
  std::ifstream rj(root / "out" / "report.json");
  const auto report = nlohmann::json::parse(rj);
  EXPECT_EQ(report.at("config").at("total_iters"), 30);
  EXPECT_EQ(report.at("records").size(), 2u);
  EXPECT_EQ(report.at("config").at("policy").at("name"), "hgs");
  fs::remove_all(root);
}

TEST(Diag, HardSubsetOfOverLarge) {
  const auto loaded = small_loaded();
  GaussianCloud cloud = make_init(loaded, cli::InitSetup{60, InitMode::GtSubsample}, 3);
  const auto b = cli::make_diag(cloud, loaded.scene, loaded.scene.cameras[1].view_id, PolicyConfig{}, 0.2);
  EXPECT_FALSE(b.hard.empty());
  for (const auto& h : b.hard) {
    EXPECT_LT(h.ssim, 0.7);
    EXPECT_TRUE(std::any_of(b.over_large.begin(), b.over_large.end(),
                            [&](const cli::DiagPoint& p) { return p.gaussian == h.gaussian && p.x == h.x && p.y == h.y; }));
  }
  EXPECT_THROW(cli::make_diag(cloud, loaded.scene, 999, PolicyConfig{}, 0.2), Error);
}

TEST(Diag, GroundTruthGivesWhiteSsimAndEmptyCloudGivesNoIndex) {
  const auto loaded = small_loaded();
  const auto gt = cli::make_diag(*loaded.gt_cloud, loaded.scene, 0, PolicyConfig{}, 0.2);
  for (double v : gt.ssim.values) EXPECT_NEAR(v, 1.0, 1e-9);
  EXPECT_TRUE(gt.hard.empty());

  const auto empty = cli::make_diag(GaussianCloud{}, loaded.scene, 0, PolicyConfig{}, 0.2);
  for (auto idx : empty.render.rendered_index) EXPECT_EQ(idx, -1);
  EXPECT_EQ(cli::index_color(-1), Vec3::Zero());

  const fs::path dir = temp_dir("diag");
  cli::write_diag(dir, empty);
  const std::string raw = slurp(dir / "rendered_index.u32");
  ASSERT_EQ(raw.size(), 4u * 32 * 32);
  for (char c : raw) EXPECT_EQ(static_cast<unsigned char>(c), 0xff);
  for (const char* f : {"rendered_index.png", "ssim.png", "over_large.png", "hard.png", "over_large.csv", "hard.csv",
                        "grads.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  fs::remove_all(dir);
}

TEST(Compare, SingleRunMatchesItsReport) {
  const fs::path root = temp_dir("compare");
  cli::CompareSpec spec;
  spec.scene.spec.width = spec.scene.spec.height = 32;
  spec.scene.spec.views = 8;
  spec.scene.spec.gt_gaussians = 60;
  spec.policies = {Policy::Hgs};
  spec.seeds = {4};
  spec.config.total_iters = 80;
  spec.config.eval_every = 40;
  spec.config.policy_config.densify_start = 20;
  spec.config.policy_config.interval = 20;
  spec.init.count = 50;
  spec.out_dir = root;
  const auto rows = cli::run_compare(spec);
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_EQ(rows[0].runs.size(), 1u);

  const auto loaded = cli::load_scene_source(spec.scene);
  TrainConfig cfg = spec.config;
  cfg.seed = 4;
  cfg.policy_config.policy = Policy::Hgs;
  const auto report = train(loaded.scene, cli::make_init(loaded, spec.init, 4), cfg);
  EXPECT_EQ(rows[0].runs[0].test_psnr, report.records.back().test_psnr);
  EXPECT_EQ(rows[0].runs[0].final_n, report.final_cloud.size());
  EXPECT_EQ(rows[0].std_psnr(), 0.0);
  std::ostringstream csv;
  write_report_csv(csv, report);
  EXPECT_EQ(slurp(root / "hgs" / "seed4" / "report.csv"), csv.str());
  EXPECT_TRUE(fs::exists(root / "compare.csv"));
  EXPECT_TRUE(fs::exists(root / "compare.md"));
  fs::remove_all(root);
}

TEST(Compare, RowsAggregateSeedsAndSweepRowsComeFirst) {
  const fs::path root = temp_dir("compare2");
  cli::CompareSpec spec;
  spec.scene.spec.width = spec.scene.spec.height = 32;
  spec.scene.spec.views = 8;
  spec.scene.spec.gt_gaussians = 40;
  spec.policies = {Policy::Og, Policy::Hgs};
  spec.seeds = {1, 2, 3};
  spec.tau_sweep = {2e-4};
  spec.config.total_iters = 20;
  spec.config.eval_every = 20;
  spec.init.count = 30;
  spec.out_dir = root;
  const auto rows = cli::run_compare(spec);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].label, "og-tau0.0002");
  EXPECT_EQ(rows[1].label, "og");
  EXPECT_EQ(rows[2].label, "hgs");
  for (const auto& r : rows) EXPECT_EQ(r.runs.size(), 3u);
  // Same threshold, same policy: the sweep row reproduces the og row.
  EXPECT_EQ(rows[0].mean_psnr(), rows[1].mean_psnr());
  spec.seeds.clear();
  EXPECT_THROW(spec.validate(), Error);
  fs::remove_all(root);
}
