#include "hgs/densify.hpp"

#include "hgs/binary_io.hpp"
#include "hgs/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace hgs {

const char* to_string(Policy policy) {
  switch (policy) {
    case Policy::Og: return "og";
    case Policy::Pghgs: return "pghgs";
    case Policy::Rehgs: return "rehgs";
    case Policy::Hgs: return "hgs";
    case Policy::EffiHgs: return "effi-hgs";
  }
  return "og";
}

Policy parse_policy(const std::string& name) {
  for (Policy p : {Policy::Og, Policy::Pghgs, Policy::Rehgs, Policy::Hgs, Policy::EffiHgs}) {
    if (name == to_string(p)) return p;
  }
  throw Error(ErrorKind::InvalidInput,
              "unknown policy '" + name + "' (expected og, pghgs, rehgs, hgs or effi-hgs)");
}

PolicyConfig PolicyConfig::resolved(int total_iters) const {
  PolicyConfig out = *this;
  if (out.densify_end < 0) out.densify_end = static_cast<int>(0.6 * total_iters);
  return out;
}

void PolicyConfig::validate() const {
  if (k < 1) throw Error(ErrorKind::InvalidSpec, "k must be >= 1");
  if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidSpec, "lambda must be positive");
  if (!(tau_large > 0.0 && tau_large < 1.0)) throw Error(ErrorKind::InvalidSpec, "tau_large must lie in (0,1)");
  if (!(tau_ssim > 0.0 && tau_ssim <= 1.0)) throw Error(ErrorKind::InvalidSpec, "tau_ssim must lie in (0,1]");
  if (interval < 1) throw Error(ErrorKind::InvalidSpec, "growth interval must be >= 1");
  if (!(tau_grad > 0.0)) throw Error(ErrorKind::InvalidSpec, "tau_grad must be positive");
  if (!(grad_unit_scale > 0.0)) throw Error(ErrorKind::InvalidSpec, "grad_unit_scale must be positive");
}

GrowthStats::GrowthStats(std::size_t n, int k)
    : grad_sum(n, 0.0),
      view_count(n, 0),
      rehgs_hit_views(n),
      last_mean_grad(n, Vec3::Zero()),
      k_(k),
      topk_(n * static_cast<std::size_t>(k), 0.0) {
  if (k < 1) throw Error(ErrorKind::InvalidSpec, "k must be >= 1");
}

std::optional<double> GrowthStats::kth_largest(std::size_t i) const {
  if (view_count[i] < k_) return std::nullopt;
  return topk_[i * static_cast<std::size_t>(k_) + static_cast<std::size_t>(k_ - 1)];
}

void GrowthStats::observe(std::size_t i, double grad_norm) {
  const auto k = static_cast<std::size_t>(k_);
  const auto filled = static_cast<std::size_t>(std::min<std::int64_t>(view_count[i], k_));
  double* buf = topk_.data() + i * k;
  grad_sum[i] += grad_norm;
  ++view_count[i];
  // Bounded insertion: shift smaller entries down, dropping the last if full.
  std::size_t pos = filled;
  while (pos > 0 && buf[pos - 1] < grad_norm) {
    if (pos < k) buf[pos] = buf[pos - 1];
    --pos;
  }
  if (pos < k) buf[pos] = grad_norm;
}

void GrowthStats::add_hit_view(std::size_t i, int view_id) {
  auto& hits = rehgs_hit_views[i];
  const auto it = std::lower_bound(hits.begin(), hits.end(), view_id);
  if (it == hits.end() || *it != view_id) hits.insert(it, view_id);
}

void write_stats(std::ostream& out, const GrowthStats& s) {
  bin::put_u64(out, s.size());
  bin::put_i64(out, s.k_);
  bin::put_i64(out, s.interval_iter);
  for (std::size_t i = 0; i < s.size(); ++i) {
    bin::put_f64(out, s.grad_sum[i]);
    bin::put_i64(out, s.view_count[i]);
    bin::put_u64(out, s.rehgs_hit_views[i].size());
    for (int v : s.rehgs_hit_views[i]) bin::put_i64(out, v);
    bin::put_vec(out, s.last_mean_grad[i]);
  }
  for (double v : s.topk_) bin::put_f64(out, v);
}

GrowthStats read_stats(std::istream& in) {
  const std::uint64_t n = bin::get_u64(in);
  const auto k = static_cast<int>(bin::get_i64(in));
  GrowthStats s(static_cast<std::size_t>(n), k);
  s.interval_iter = static_cast<int>(bin::get_i64(in));
  for (std::size_t i = 0; i < n; ++i) {
    s.grad_sum[i] = bin::get_f64(in);
    s.view_count[i] = bin::get_i64(in);
    const std::uint64_t hits = bin::get_u64(in);
    for (std::uint64_t h = 0; h < hits; ++h) s.rehgs_hit_views[i].push_back(static_cast<int>(bin::get_i64(in)));
    s.last_mean_grad[i] = bin::get_vec<3>(in);
  }
  for (double& v : s.topk_) v = bin::get_f64(in);
  return s;
}

bool is_over_large(std::int64_t pixel_count, double tau_large, int width, int height) {
  return static_cast<double>(pixel_count) > tau_large * static_cast<double>(width) * height;
}

std::optional<std::pair<int, int>> projected_pixel(const Vec2& mean2d, int width, int height) {
  const double rx = std::round(mean2d.x());
  const double ry = std::round(mean2d.y());
  if (!(rx >= 0.0 && rx <= width - 1 && ry >= 0.0 && ry <= height - 1)) return std::nullopt;
  return std::pair{static_cast<int>(rx), static_cast<int>(ry)};
}

std::vector<ViewPoint> over_large_points(const RenderOutput& render,
                                         std::span<const std::optional<Vec2>> means2d,
                                         const PolicyConfig& cfg) {
  std::vector<ViewPoint> out;
  for (std::size_t i = 0; i < render.gaussian_count(); ++i) {
    if (!is_over_large(render.pixel_counts[i], cfg.tau_large, render.width(), render.height())) continue;
    if (!means2d[i]) continue;
    if (auto px = projected_pixel(*means2d[i], render.width(), render.height())) {
      out.push_back({i, px->first, px->second});
    }
  }
  return out;
}

std::vector<ViewPoint> hard_points(const RenderOutput& render,
                                   std::span<const std::optional<Vec2>> means2d,
                                   const SsimMap& ssim, const PolicyConfig& cfg) {
  std::vector<ViewPoint> out;
  for (const ViewPoint& p : over_large_points(render, means2d, cfg)) {
    if (ssim.at(p.x, p.y) < cfg.tau_ssim) out.push_back(p);
  }
  return out;
}

void accumulate(GrowthStats& stats, int view_id, const ParamGrads& grads,
                const RenderOutput& render, const SsimMap& ssim,
                std::span<const std::optional<Vec2>> means2d, const PolicyConfig& cfg) {
  const std::size_t n = stats.size();
  if (grads.size() != n || render.gaussian_count() != n || means2d.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "growth statistics and view evidence differ in length");
  }
  if (ssim.width != render.width() || ssim.height != render.height()) {
    throw Error(ErrorKind::DimensionMismatch, "SSIM map does not match the render");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!render.visible[i]) continue;
    stats.observe(i, grads.viewspace_grads[i].norm());
    if (grads.d_means[i].squaredNorm() > 0.0) stats.last_mean_grad[i] = grads.d_means[i];
  }
  for (const ViewPoint& p : hard_points(render, means2d, ssim, cfg)) {
    stats.add_hit_view(p.gaussian, view_id);
  }
  ++stats.interval_iter;
}

Mask select_og(const GrowthStats& stats, const PolicyConfig& cfg) {
  const double tau = cfg.pixel_tau_grad();
  Mask m(stats.size(), false);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    m[i] = stats.view_count[i] > 0 &&
           stats.grad_sum[i] / static_cast<double>(stats.view_count[i]) >= tau;
  }
  return m;
}

Mask select_pghgs(const GrowthStats& stats, const PolicyConfig& cfg) {
  const double tau = cfg.lambda * cfg.pixel_tau_grad();
  Mask m(stats.size(), false);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto kth = stats.kth_largest(i);
    m[i] = kth && *kth >= tau;
  }
  return m;
}

Mask select_rehgs(const GrowthStats& stats, const PolicyConfig&) {
  Mask m(stats.size(), false);
  for (std::size_t i = 0; i < stats.size(); ++i) m[i] = stats.rehgs_hit_views[i].size() >= 2;
  return m;
}

Mask select_effi(const GrowthStats& stats, const PolicyConfig& cfg) {
  // Q = |OG| / N, so ceil(Q * N) is exactly |OG|.
  const std::size_t budget = count(select_og(stats, cfg));
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats.kth_largest(i)) eligible.push_back(i);
  }
  const std::size_t take = std::min(budget, eligible.size());
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(take), eligible.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double ka = *stats.kth_largest(a), kb = *stats.kth_largest(b);
                      if (ka != kb) return ka > kb;
                      return a < b;
                    });
  Mask m(stats.size(), false);
  for (std::size_t j = 0; j < take; ++j) m[eligible[j]] = true;
  return m;
}

std::size_t count(const Mask& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

GrowResult grow(const GaussianCloud& cloud, const Mask& mask, const PolicyConfig& cfg,
                double scene_extent, std::uint64_t seed, std::span<const Vec3> grad_dirs) {
  cloud.validate();
  if (mask.size() != cloud.size()) {
    throw Error(ErrorKind::DimensionMismatch, "growth mask length differs from cloud size");
  }
  if (!grad_dirs.empty() && grad_dirs.size() != cloud.size()) {
    throw Error(ErrorKind::DimensionMismatch, "gradient directions differ from cloud size");
  }
  const double clone_limit = cfg.percent_dense * scene_extent;
  const double shrink = std::log(1.6);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  GrowResult out;
  GaussianCloud clones, children;
  std::vector<Lineage> clone_lineage, child_lineage;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!mask[i]) {
      out.cloud.push_from(cloud, i);
      out.lineage.push_back({i, Origin::Kept});
      continue;
    }
    if (cloud.max_scale(i) < clone_limit) {
      out.cloud.push_from(cloud, i);
      out.lineage.push_back({i, Origin::Kept});
      clones.push_from(cloud, i);
      if (!grad_dirs.empty() && grad_dirs[i].squaredNorm() > 0.0) {
        clones.means.back() -= grad_dirs[i].normalized() * (0.01 * scene_extent);
      }
      clone_lineage.push_back({i, Origin::CloneCopy});
    } else {
      const Mat3 rot = rotation_matrix(cloud.rotations[i]);
      const Vec3 scale = cloud.log_scales[i].array().exp();
      for (int c = 0; c < 2; ++c) {
        const Vec3 z(normal(rng), normal(rng), normal(rng));
        children.push_from(cloud, i);
        children.means.back() = cloud.means[i] + rot * scale.cwiseProduct(z);
        children.log_scales.back() = cloud.log_scales[i].array() - shrink;
        child_lineage.push_back({i, c == 0 ? Origin::SplitFirst : Origin::SplitSecond});
      }
    }
  }
  for (std::size_t j = 0; j < clones.size(); ++j) {
    out.cloud.push_from(clones, j);
    out.lineage.push_back(clone_lineage[j]);
  }
  for (std::size_t j = 0; j < children.size(); ++j) {
    out.cloud.push_from(children, j);
    out.lineage.push_back(child_lineage[j]);
  }
  return out;
}

PruneResult prune(const GaussianCloud& cloud, const PolicyConfig& cfg, double scene_extent) {
  cloud.validate();
  PruneResult out;
  out.kept.assign(cloud.size(), true);
  const double max_scale = cfg.prune_scale_fraction * scene_extent;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.kept[i] = !(cloud.opacity(i) < cfg.prune_opacity || cloud.max_scale(i) > max_scale);
  }
  out.cloud = cloud.filtered(out.kept);
  return out;
}

void write_growth_log_csv(std::ostream& out, std::span<const GrowthLogRow> rows) {
  out << "iteration,policy,N_before,og_count,pghgs_count,rehgs_count,effi_count,union_count,pruned,N_after\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << to_string(r.policy) << ',' << r.n_before << ',' << r.og_count << ','
        << r.pghgs_count << ',' << r.rehgs_count << ',' << r.effi_count << ',' << r.union_count << ','
        << r.pruned << ',' << r.n_after << '\n';
  }
}

Mask policy_mask(const GrowthStats& stats, const PolicyConfig& cfg, GrowthLogRow* counts) {
  Mask og = select_og(stats, cfg);
  Mask result = og;
  auto merge = [&](const Mask& m) {
    for (std::size_t i = 0; i < m.size(); ++i) result[i] = result[i] || m[i];
  };
  GrowthLogRow row;
  row.og_count = count(og);
  const Policy p = cfg.policy;
  if (p == Policy::Pghgs || p == Policy::Hgs) {
    const Mask m = select_pghgs(stats, cfg);
    row.pghgs_count = count(m);
    merge(m);
  }
  if (p == Policy::EffiHgs) {
    const Mask m = select_effi(stats, cfg);
    row.effi_count = count(m);
    merge(m);
  }
  if (p == Policy::Rehgs || p == Policy::Hgs || p == Policy::EffiHgs) {
    const Mask m = select_rehgs(stats, cfg);
    row.rehgs_count = count(m);
    merge(m);
  }
  row.union_count = count(result);
  if (counts) *counts = row;
  return result;
}

IntervalResult run_interval_policy(const GaussianCloud& cloud, const GrowthStats& stats,
                                   const PolicyConfig& cfg, double scene_extent,
                                   std::uint64_t seed, int iteration) {
  if (stats.size() != cloud.size()) {
    throw Error(ErrorKind::DimensionMismatch, "growth statistics differ from cloud size");
  }
  IntervalResult out;
  out.growth_set = policy_mask(stats, cfg, &out.log);
  out.log.iteration = iteration;
  out.log.policy = cfg.policy;
  out.log.n_before = cloud.size();

  GrowResult grown = grow(cloud, out.growth_set, cfg, scene_extent, seed, stats.last_mean_grad);
  PruneResult pruned = prune(grown.cloud, cfg, scene_extent);
  for (std::size_t j = 0; j < grown.lineage.size(); ++j) {
    if (pruned.kept[j]) out.lineage.push_back(grown.lineage[j]);
  }
  out.log.pruned = grown.cloud.size() - pruned.cloud.size();
  out.cloud = std::move(pruned.cloud);
  out.log.n_after = out.cloud.size();
  out.stats = GrowthStats(out.cloud.size(), stats.k());
  return out;
}

}  // namespace hgs
