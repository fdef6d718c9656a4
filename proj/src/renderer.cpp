#include "hgs/renderer.hpp"

#include "hgs/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace hgs {

std::optional<Splat2D> project_gaussian(const Camera& camera, const ActivatedGaussian& g,
                                        int gaussian_index) {
  const Vec3 t = camera.rotation * g.mean + camera.translation;
  if (!(t.z() > kNearPlane)) return std::nullopt;
  if (!(g.opacity > kMinAlpha)) return std::nullopt;

  const double z = t.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << camera.fx / z, 0.0, -camera.fx * t.x() / (z * z),
         0.0, camera.fy / z, -camera.fy * t.y() / (z * z);
  const Eigen::Matrix<double, 2, 3> tw = jac * camera.rotation;
  Mat2 cov2d = tw * g.cov * tw.transpose();
  cov2d = 0.5 * (cov2d + cov2d.transpose());
  cov2d(0, 0) += kLowPassDilation;
  cov2d(1, 1) += kLowPassDilation;

  const double det = cov2d.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;

  Splat2D s;
  s.mean2d = {camera.fx * t.x() / z + camera.cx, camera.fy * t.y() / z + camera.cy};
  s.conic_a = cov2d(1, 1) / det;
  s.conic_b = -cov2d(0, 1) / det;
  s.conic_c = cov2d(0, 0) / det;
  s.depth = z;
  s.opacity = g.opacity;
  s.color = g.color;
  s.gaussian_index = gaussian_index;

  const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
  const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  s.radius = 3.0 * std::sqrt(lambda_max);
  // opacity * exp(-q/2) >= 1/255  <=>  q <= 2 ln(255 opacity); pad for rounding.
  const double q_max = 2.0 * std::log(g.opacity / kMinAlpha);
  s.support_radius = std::sqrt(lambda_max * q_max) * (1.0 + 1e-9) + 1e-9;

  const double r = s.support_radius;
  if (s.mean2d.x() + r < 0.0 || s.mean2d.x() - r > camera.width - 1 ||
      s.mean2d.y() + r < 0.0 || s.mean2d.y() - r > camera.height - 1) {
    return std::nullopt;
  }
  return s;
}

namespace {

struct TileResult {
  std::vector<ContribRecord> records;
  // Per pixel of the tile: record count.
  std::vector<std::uint32_t> counts;
  // Indexed by position in the tile's splat list.
  std::vector<std::int64_t> wins;
  std::vector<bool> used;
};

}  // namespace

RenderOutput rasterize(std::vector<Splat2D> splats, const Camera& camera, const Vec3& background,
                       std::size_t gaussian_count) {
  std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.gaussian_index < b.gaussian_index;
  });
  for (const auto& s : splats) {
    gaussian_count = std::max(gaussian_count, static_cast<std::size_t>(s.gaussian_index) + 1);
  }

  const int width = camera.width;
  const int height = camera.height;
  const int tiles_x = (width + kTileSize - 1) / kTileSize;
  const int tiles_y = (height + kTileSize - 1) / kTileSize;
  const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * tiles_y;

  // Splats are visited in depth order, so every tile list is depth sorted.
  std::vector<std::vector<std::int32_t>> tile_lists(tile_count);
  for (std::size_t si = 0; si < splats.size(); ++si) {
    const Splat2D& s = splats[si];
    const double r = s.support_radius;
    const int x0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - r)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(s.mean2d.x() + r)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - r)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(s.mean2d.y() + r)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty) {
      for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx) {
        tile_lists[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(
            static_cast<std::int32_t>(si));
      }
    }
  }

  RenderOutput out;
  out.image = Image(width, height);
  out.rendered_index.assign(static_cast<std::size_t>(width) * height, -1);
  out.final_transmittance.assign(static_cast<std::size_t>(width) * height, 1.0);
  out.pixel_counts.assign(gaussian_count, 0);
  out.visible.assign(gaussian_count, false);
  out.background = background;

  std::vector<TileResult> results(tile_count);
  parallel_for(tile_count, [&](std::size_t tile) {
    const auto& list = tile_lists[tile];
    TileResult& res = results[tile];
    res.wins.assign(list.size(), 0);
    res.used.assign(list.size(), false);
    const int tx = static_cast<int>(tile % tiles_x);
    const int ty = static_cast<int>(tile / tiles_x);
    const int px0 = tx * kTileSize, px1 = std::min(width, px0 + kTileSize);
    const int py0 = ty * kTileSize, py1 = std::min(height, py0 + kTileSize);
    res.counts.assign(static_cast<std::size_t>(px1 - px0) * (py1 - py0), 0);

    std::size_t local = 0;
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px, ++local) {
        double trans = 1.0;
        Vec3 color = Vec3::Zero();
        double best_w = 0.0;
        int best_gaussian = -1;
        std::size_t best_slot = 0;
        std::uint32_t n = 0;
        for (std::size_t k = 0; k < list.size(); ++k) {
          const Splat2D& s = splats[list[k]];
          const double power = s.power_at(px, py);
          if (power > 0.0) continue;
          const double alpha = std::min(kMaxAlpha, s.opacity * std::exp(power));
          if (alpha < kMinAlpha) continue;
          const double w = alpha * trans;
          res.records.push_back({s.gaussian_index, list[k], w, alpha, trans});
          ++n;
          color += w * s.color;
          if (w > 0.0) res.used[k] = true;
          if (w > best_w || (w == best_w && best_gaussian >= 0 && s.gaussian_index < best_gaussian)) {
            best_w = w;
            best_gaussian = s.gaussian_index;
            best_slot = k;
          }
          trans *= 1.0 - alpha;
          if (trans < kTransmittanceStop) break;
        }
        res.counts[local] = n;
        const std::size_t p = static_cast<std::size_t>(py) * width + px;
        out.image.set_pixel(px, py, color + trans * background);
        out.final_transmittance[p] = trans;
        if (best_gaussian >= 0) {
          out.rendered_index[p] = best_gaussian;
          ++res.wins[best_slot];
        }
      }
    }
  });

  // Deterministic merge in tile order.
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  std::vector<std::uint32_t> counts(pixels, 0);
  std::vector<std::size_t> tile_base(tile_count + 1, 0);
  for (std::size_t tile = 0; tile < tile_count; ++tile) {
    tile_base[tile + 1] = tile_base[tile] + results[tile].records.size();
  }
  for (std::size_t tile = 0; tile < tile_count; ++tile) {
    const int tx = static_cast<int>(tile % tiles_x);
    const int ty = static_cast<int>(tile / tiles_x);
    const int px0 = tx * kTileSize, px1 = std::min(width, px0 + kTileSize);
    const int py0 = ty * kTileSize, py1 = std::min(height, py0 + kTileSize);
    std::size_t local = 0;
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px, ++local) {
        counts[static_cast<std::size_t>(py) * width + px] = results[tile].counts[local];
      }
    }
    const auto& list = tile_lists[tile];
    for (std::size_t k = 0; k < list.size(); ++k) {
      const auto gi = static_cast<std::size_t>(splats[list[k]].gaussian_index);
      out.pixel_counts[gi] += results[tile].wins[k];
      if (results[tile].used[k]) out.visible[gi] = true;
    }
  }

  // Records are stored tile-major; rebuild them pixel-major.
  out.contrib_offsets.assign(pixels + 1, 0);
  for (std::size_t p = 0; p < pixels; ++p) out.contrib_offsets[p + 1] = out.contrib_offsets[p] + counts[p];
  out.contribs.resize(out.contrib_offsets[pixels]);
  for (std::size_t tile = 0; tile < tile_count; ++tile) {
    const int tx = static_cast<int>(tile % tiles_x);
    const int ty = static_cast<int>(tile / tiles_x);
    const int px0 = tx * kTileSize, px1 = std::min(width, px0 + kTileSize);
    const int py0 = ty * kTileSize, py1 = std::min(height, py0 + kTileSize);
    std::size_t src = 0;
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        const std::size_t p = static_cast<std::size_t>(py) * width + px;
        const std::size_t n = counts[p];
        std::copy_n(results[tile].records.begin() + static_cast<std::ptrdiff_t>(src), n,
                    out.contribs.begin() + static_cast<std::ptrdiff_t>(out.contrib_offsets[p]));
        src += n;
      }
    }
  }

  out.splat_of_gaussian.assign(gaussian_count, -1);
  for (std::size_t si = 0; si < splats.size(); ++si) {
    const auto gi = static_cast<std::size_t>(splats[si].gaussian_index);
    if (gi < gaussian_count) out.splat_of_gaussian[gi] = static_cast<std::int32_t>(si);
  }
  out.splats = std::move(splats);
  return out;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  }
  void value(double v) { bytes(&v, sizeof(v)); }
  template <typename Vec>
  void values(const std::vector<Vec>& v) {
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(Vec));
  }
};

}  // namespace

std::uint64_t render_token(const GaussianCloud& cloud, const Camera& camera,
                           const Vec3& background) {
  Fnv1a f;
  const std::uint64_t n = cloud.size();
  f.bytes(&n, sizeof(n));
  f.values(cloud.means);
  f.values(cloud.log_scales);
  f.values(cloud.rotations);
  f.values(cloud.raw_opacities);
  f.values(cloud.colors);
  for (double v : {camera.fx, camera.fy, camera.cx, camera.cy}) f.value(v);
  for (int v : {camera.width, camera.height, camera.view_id}) f.bytes(&v, sizeof(v));
  f.bytes(camera.rotation.data(), sizeof(double) * 9);
  f.bytes(camera.translation.data(), sizeof(double) * 3);
  f.bytes(background.data(), sizeof(double) * 3);
  return f.h;
}

RenderOutput render_view(const GaussianCloud& cloud, const Camera& camera, const Vec3& background) {
  cloud.validate();
  std::vector<Splat2D> splats;
  splats.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto s = project_gaussian(camera, activate(cloud, i), static_cast<int>(i))) {
      splats.push_back(*s);
    }
  }
  RenderOutput out = rasterize(std::move(splats), camera, background, cloud.size());
  out.token = render_token(cloud, camera, background);
  return out;
}

std::vector<std::optional<Vec2>> projected_means(const RenderOutput& render) {
  std::vector<std::optional<Vec2>> out(render.gaussian_count());
  for (const auto& s : render.splats) {
    out[static_cast<std::size_t>(s.gaussian_index)] = s.mean2d;
  }
  return out;
}

}  // namespace hgs
