#pragma once

#include "hgs/densify.hpp"
#include "hgs/gaussian_model.hpp"
#include "hgs/optimizer.hpp"
#include "hgs/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hgs {

struct TrainConfig {
  int total_iters = 3000;
  double lr_means = 1.6e-4;
  double lr_means_final = 1.6e-6;
  double lr_scales = 5.0e-3;
  double lr_rotations = 1.0e-3;
  double lr_opacities = 5.0e-2;
  double lr_colors = 2.5e-3;
  /// Multiply the mean learning rates by the scene extent.
  bool scale_means_lr_by_extent = true;
  double lambda_ssim = 0.2;
  int eval_every = 500;
  /// 0 disables periodic checkpoints.
  int checkpoint_every = 0;
  std::uint64_t seed = 0;
  PolicyConfig policy_config;

  /// Throws InvalidSpec when total_iters < 1, a learning rate is not
  /// positive, or eval_every < 1.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON form.
  std::uint64_t hash() const;
};

struct EvalRecord {
  int iteration = 0;
  double train_psnr = 0.0;
  double test_psnr = 0.0;
  double test_ssim = 0.0;
  std::size_t n_gaussians = 0;
  /// Seconds since the start of training. Not part of the deterministic report.
  double wall_time = 0.0;
};

struct TrainReport {
  TrainConfig config;
  std::vector<EvalRecord> records;
  std::vector<GrowthLogRow> growth_log;
  GaussianCloud final_cloud;
};

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  int iteration = 0;
  GaussianCloud cloud;
  Adam adam;
  GrowthStats stats;
  std::vector<EvalRecord> records;
  std::vector<GrowthLogRow> growth_log;
  /// Wall time accumulated before this process picked the state up.
  double elapsed_before = 0.0;
};

struct TrainHooks {
  /// Stop after this iteration (the state is left resumable). < 0 runs to the end.
  int stop_after = -1;
  /// Called every checkpoint_every iterations with the current state.
  std::function<void(const TrainState&)> on_checkpoint;
  /// Where a diverged run dumps the offending view and cloud; empty disables.
  std::filesystem::path dump_dir;
  /// Called after each evaluation.
  std::function<void(const EvalRecord&)> on_eval;
};

TrainState initial_state(const GaussianCloud& init, const TrainConfig& cfg);

/// Advances `state` until total_iters or hooks.stop_after. Throws Diverged on
/// a non-finite loss or gradient after writing the dump.
void run_training(const Scene& scene, TrainState& state, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

TrainReport train(const Scene& scene, const GaussianCloud& init, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

struct EvalResult {
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Mean PSNR and mean SSIM over the views of `split`. Throws InvalidInput on an
/// empty split.
EvalResult evaluate(const GaussianCloud& cloud, const Scene& scene, Split split);

/// Permutation of the train views used for epoch `epoch`.
std::vector<std::size_t> epoch_order(const std::vector<std::size_t>& train_views,
                                     std::uint64_t seed, std::uint64_t epoch);

/// Writes <prefix>.hgscloud (float32 snapshot), <prefix>.state (exact binary
/// state) and <prefix>.json (sidecar pointing at both).
void save_checkpoint(const std::filesystem::path& prefix, const TrainState& state,
                     const TrainConfig& cfg);
/// Reads the sidecar at `json_path`. Throws InvalidInput if the config hash
/// differs from `cfg` and `allow_config_change` is false.
TrainState load_checkpoint(const std::filesystem::path& json_path, const TrainConfig& cfg,
                           bool allow_config_change = false);

/// Six-decimal fixed point, shared by every report table.
std::string format_fixed(double v);

void write_report_csv(std::ostream& out, const TrainReport& report);
nlohmann::json report_json(const TrainReport& report);
void write_timing_csv(std::ostream& out, const TrainReport& report);

/// report.csv, report.json, growth_log.csv, timing.csv and final.hgscloud.
void write_report_files(const std::filesystem::path& dir, const TrainReport& report);

}  // namespace hgs
