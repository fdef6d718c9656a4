#pragma once

#include "hgs/backward.hpp"
#include "hgs/densify.hpp"
#include "hgs/loss_metrics.hpp"
#include "hgs/scene.hpp"
#include "hgs/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hgs::cli {

/// Entry point of the `hgs` tool. Returns 0 on success, 2 on usage errors and
/// 1 on runtime failures.
int run(int argc, const char* const* argv);

/// A scene directory, or the synthetic generator when `dir` is empty.
struct SceneSource {
  std::filesystem::path dir;
  SceneSpec spec;
  std::uint64_t scene_seed = 7;
};

struct LoadedScene {
  Scene scene;
  std::optional<GaussianCloud> gt_cloud;
};

/// Loads `dir` (plus `gt.hgscloud` when present) or generates the synthetic scene.
LoadedScene load_scene_source(const SceneSource& source);

struct InitSetup {
  std::size_t count = 200;
  InitMode mode = InitMode::GtSubsample;
};

/// Throws InvalidInput when gt-subsample is requested without a ground-truth cloud.
GaussianCloud make_init(const LoadedScene& loaded, const InitSetup& setup, std::uint64_t seed);

struct CompareSpec {
  SceneSource scene;
  std::vector<Policy> policies;
  TrainConfig config;
  InitSetup init;
  std::vector<std::uint64_t> seeds;
  /// When non-empty, adds one OG row per threshold ahead of the policy rows.
  std::vector<double> tau_sweep;
  std::filesystem::path out_dir;
  /// Concurrent (row, seed) jobs; each job renders single-threaded when > 1.
  int jobs = 1;

  /// Throws InvalidSpec without at least one row or one seed.
  void validate() const;
};

struct CompareRun {
  std::uint64_t seed = 0;
  double test_psnr = 0.0;
  double test_ssim = 0.0;
  std::size_t final_n = 0;
  double wall_time = 0.0;
};

struct CompareRow {
  std::string label;
  Policy policy = Policy::Og;
  double tau_grad = 0.0;
  std::vector<CompareRun> runs;

  double mean_psnr() const;
  double std_psnr() const;
  double mean_ssim() const;
  double std_ssim() const;
  double mean_n() const;
  double std_n() const;
  double mean_wall() const;
};

/// Trains every (row, seed) pair, writing each run's report files under
/// out_dir/<label>/seed<seed>/ and the tables under out_dir.
std::vector<CompareRow> run_compare(const CompareSpec& spec);

/// compare.csv and compare_runs.csv are deterministic; wall time goes to
/// compare_timing.csv and the markdown table only.
void write_compare_tables(const std::filesystem::path& dir, const std::vector<CompareRow>& rows);
std::string compare_markdown(const std::vector<CompareRow>& rows);

struct DiagPoint {
  std::size_t gaussian;
  int x;
  int y;
  double ssim;
  std::int64_t pixel_count;
};

struct DiagBundle {
  int view_id = 0;
  RenderOutput render;
  SsimMap ssim;
  ParamGrads grads;
  std::vector<DiagPoint> over_large;
  std::vector<DiagPoint> hard;
};

/// Renders `view_id`, computes the SSIM map against its ground truth, the view
/// gradients under the combined loss, and the over-large / hard point sets.
/// Throws IndexOutOfRange for an unknown view.
DiagBundle make_diag(const GaussianCloud& cloud, const Scene& scene, int view_id,
                     const PolicyConfig& cfg, double lambda_ssim);

/// Color for a rendered index; -1 maps to black.
Vec3 index_color(std::int32_t index);

/// rendered_index.png / .u32, ssim.png, over_large.png / .csv, hard.png / .csv, grads.csv.
void write_diag(const std::filesystem::path& dir, const DiagBundle& bundle);

}  // namespace hgs::cli
