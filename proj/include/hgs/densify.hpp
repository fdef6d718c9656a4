#pragma once

#include "hgs/backward.hpp"
#include "hgs/gaussian_model.hpp"
#include "hgs/loss_metrics.hpp"
#include "hgs/renderer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hgs {

/// Which growth criteria are combined (always as a union with the average
/// gradient criterion, except `Og` which is that criterion alone).
enum class Policy { Og, Pghgs, Rehgs, Hgs, EffiHgs };

const char* to_string(Policy policy);
/// Throws InvalidInput on an unknown name.
Policy parse_policy(const std::string& name);

struct PolicyConfig {
  double tau_grad = 2.0e-4;
  /// Factor taking tau_grad to the pixel units of the view-space gradients.
  double grad_unit_scale = 1.0;
  int interval = 100;
  int k = 3;
  double lambda = 1.0;
  double tau_large = 2.0e-4;
  double tau_ssim = 0.7;
  Policy policy = Policy::Og;
  int densify_start = 500;
  /// < 0 resolves to 60% of the total iterations.
  int densify_end = -1;
  double percent_dense = 0.01;
  double prune_opacity = 0.005;
  /// Gaussians wider than this fraction of the scene extent are pruned.
  double prune_scale_fraction = 0.5;
  bool opacity_reset = false;
  int opacity_reset_every = 3000;

  double pixel_tau_grad() const { return tau_grad * grad_unit_scale; }
  /// Resolves densify_end for a concrete run.
  PolicyConfig resolved(int total_iters) const;
  /// Throws InvalidSpec when k < 1, lambda <= 0, tau_large outside (0,1),
  /// tau_ssim outside (0,1], interval < 1 or a non-positive tau_grad or
  /// grad_unit_scale.
  void validate() const;
};

/// Per-Gaussian statistics accumulated over one growth interval.
class GrowthStats {
 public:
  GrowthStats() = default;
  GrowthStats(std::size_t n, int k);

  std::size_t size() const { return grad_sum.size(); }
  int k() const { return k_; }

  /// Largest `k` gradient norms seen so far, descending; only the first
  /// min(view_count, k) entries are populated.
  std::span<const double> topk(std::size_t i) const {
    return {topk_.data() + i * static_cast<std::size_t>(k_), static_cast<std::size_t>(k_)};
  }
  /// The k-th largest norm, or nullopt when seen fewer than k times.
  std::optional<double> kth_largest(std::size_t i) const;

  /// Records one observation: updates sum, count and the bounded top-k buffer.
  void observe(std::size_t i, double grad_norm);
  /// Adds view_id to the Gaussian's distinct hit set (no duplicates).
  void add_hit_view(std::size_t i, int view_id);

  std::vector<double> grad_sum;
  std::vector<std::int64_t> view_count;
  std::vector<std::vector<int>> rehgs_hit_views;
  /// Most recent nonzero world-space mean gradient, used to offset clones.
  std::vector<Vec3> last_mean_grad;
  int interval_iter = 0;

  friend bool operator==(const GrowthStats&, const GrowthStats&) = default;

 private:
  int k_ = 1;
  std::vector<double> topk_;

  friend void write_stats(std::ostream&, const GrowthStats&);
  friend GrowthStats read_stats(std::istream&);
};

void write_stats(std::ostream& out, const GrowthStats& stats);
GrowthStats read_stats(std::istream& in);

/// ||S_i|| > tau_large * ||P||.
bool is_over_large(std::int64_t pixel_count, double tau_large, int width, int height);

/// Pixel a Gaussian is tested at: its rounded projected mean, if inside the image.
std::optional<std::pair<int, int>> projected_pixel(const Vec2& mean2d, int width, int height);

struct ViewPoint {
  std::size_t gaussian;
  int x;
  int y;
};

/// Gaussians passing the over-large test in this view, at their projected pixel.
std::vector<ViewPoint> over_large_points(const RenderOutput& render,
                                         std::span<const std::optional<Vec2>> means2d,
                                         const PolicyConfig& cfg);
/// Subset of over_large_points whose SSIM value is below tau_ssim.
std::vector<ViewPoint> hard_points(const RenderOutput& render,
                                   std::span<const std::optional<Vec2>> means2d,
                                   const SsimMap& ssim, const PolicyConfig& cfg);

/// Folds one view's evidence into the stats. Throws DimensionMismatch when
/// the per-Gaussian arrays disagree.
void accumulate(GrowthStats& stats, int view_id, const ParamGrads& grads,
                const RenderOutput& render, const SsimMap& ssim,
                std::span<const std::optional<Vec2>> means2d, const PolicyConfig& cfg);

using Mask = std::vector<bool>;

Mask select_og(const GrowthStats& stats, const PolicyConfig& cfg);
Mask select_pghgs(const GrowthStats& stats, const PolicyConfig& cfg);
Mask select_rehgs(const GrowthStats& stats, const PolicyConfig& cfg);
Mask select_effi(const GrowthStats& stats, const PolicyConfig& cfg);

std::size_t count(const Mask& mask);

/// Where an output Gaussian came from, for carrying optimizer state along.
enum class Origin { Kept, CloneCopy, SplitFirst, SplitSecond };

struct Lineage {
  std::size_t parent;
  Origin origin;
};

struct GrowResult {
  GaussianCloud cloud;
  std::vector<Lineage> lineage;
};

/// Clones small selected Gaussians (copy offset along the descent direction of
/// `grad_dirs` by 0.01 * extent) and splits large ones into two samples with
/// scales divided by 1.6. Output order: kept originals, clone copies, split
/// children.
GrowResult grow(const GaussianCloud& cloud, const Mask& mask, const PolicyConfig& cfg,
                double scene_extent, std::uint64_t seed, std::span<const Vec3> grad_dirs = {});

struct PruneResult {
  GaussianCloud cloud;
  Mask kept;
};

/// Removes Gaussians with opacity < prune_opacity or max scale above
/// prune_scale_fraction * extent.
PruneResult prune(const GaussianCloud& cloud, const PolicyConfig& cfg, double scene_extent);

struct GrowthLogRow {
  int iteration = 0;
  Policy policy = Policy::Og;
  std::size_t n_before = 0;
  std::size_t og_count = 0;
  std::size_t pghgs_count = 0;
  std::size_t rehgs_count = 0;
  std::size_t effi_count = 0;
  std::size_t union_count = 0;
  std::size_t pruned = 0;
  std::size_t n_after = 0;

  friend bool operator==(const GrowthLogRow&, const GrowthLogRow&) = default;
};

void write_growth_log_csv(std::ostream& out, std::span<const GrowthLogRow> rows);

struct IntervalResult {
  GaussianCloud cloud;
  GrowthStats stats;
  std::vector<Lineage> lineage;
  Mask growth_set;
  GrowthLogRow log;
};

/// Union of the policy's criteria (each Gaussian grows at most once), then
/// grow, then prune; returns stats sized and zeroed for the new cloud.
IntervalResult run_interval_policy(const GaussianCloud& cloud, const GrowthStats& stats,
                                   const PolicyConfig& cfg, double scene_extent,
                                   std::uint64_t seed, int iteration = 0);

/// The policy's union mask without growing anything.
Mask policy_mask(const GrowthStats& stats, const PolicyConfig& cfg, GrowthLogRow* counts = nullptr);

}  // namespace hgs
