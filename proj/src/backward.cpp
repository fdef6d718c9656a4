#include "hgs/backward.hpp"

#include "hgs/error.hpp"
#include "hgs/parallel.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace hgs {

ParamGrads::ParamGrads(std::size_t n)
    : d_means(n, Vec3::Zero()),
      d_log_scales(n, Vec3::Zero()),
      d_rotations(n, Quat::Zero()),
      d_raw_opacities(n, 0.0),
      d_colors(n, Vec3::Zero()),
      viewspace_grads(n, Vec2::Zero()) {}

bool ParamGrads::all_finite() const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (!d_means[i].allFinite() || !d_log_scales[i].allFinite() || !d_rotations[i].allFinite() ||
        !std::isfinite(d_raw_opacities[i]) || !d_colors[i].allFinite() ||
        !viewspace_grads[i].allFinite()) {
      return false;
    }
  }
  return true;
}

namespace {

/// Gradients with respect to one splat's 2D quantities.
struct SplatGrad {
  Vec2 mean2d = Vec2::Zero();
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();

  SplatGrad& operator+=(const SplatGrad& o) {
    mean2d += o.mean2d;
    conic_a += o.conic_a;
    conic_b += o.conic_b;
    conic_c += o.conic_c;
    opacity += o.opacity;
    color += o.color;
    return *this;
  }
};

/// dL/dq for R(q / |q|) given dL/dR.
Quat rotation_backward(const Quat& q, const Mat3& g) {
  const double norm = q.norm();
  const Quat u = q / norm;
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Quat gu;
  gu[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  gu[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                 z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
  gu[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                 w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
  gu[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                 y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return (gu - u * u.dot(gu)) / norm;
}

}  // namespace

ParamGrads backward_view(const GaussianCloud& cloud, const Camera& camera,
                         const RenderOutput& render, const Image& d_image) {
  cloud.validate();
  if (render.token != render_token(cloud, camera, render.background)) {
    throw Error(ErrorKind::ContractViolation,
                "render output does not belong to this cloud/camera (stale contrib records)");
  }
  if (d_image.width() != render.width() || d_image.height() != render.height()) {
    throw Error(ErrorKind::DimensionMismatch, "d_image does not match the rendered image");
  }

  const int width = render.width();
  const int height = render.height();
  const int tiles_x = (width + kTileSize - 1) / kTileSize;
  const int tiles_y = (height + kTileSize - 1) / kTileSize;
  const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * tiles_y;
  const std::size_t splat_count = render.splats.size();

  // Per-tile accumulators keyed by splat slot, merged in tile order below.
  std::vector<std::vector<SplatGrad>> tile_grads(tile_count);
  std::vector<std::vector<std::int32_t>> tile_touched(tile_count);
  parallel_for(tile_count, [&](std::size_t tile) {
    auto& acc = tile_grads[tile];
    auto& touched = tile_touched[tile];
    acc.assign(splat_count, SplatGrad{});
    std::vector<bool> seen(splat_count, false);
    const int tx = static_cast<int>(tile % tiles_x);
    const int ty = static_cast<int>(tile / tiles_x);
    const int px0 = tx * kTileSize, px1 = std::min(width, px0 + kTileSize);
    const int py0 = ty * kTileSize, py1 = std::min(height, py0 + kTileSize);
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        const std::size_t p = static_cast<std::size_t>(py) * width + px;
        const std::size_t begin = render.contrib_offsets[p];
        const std::size_t end = render.contrib_offsets[p + 1];
        if (begin == end) continue;
        const Vec3 dc = d_image.pixel(px, py);
        double suffix = render.final_transmittance[p] * render.background.dot(dc);
        for (std::size_t k = end; k-- > begin;) {
          const ContribRecord& rec = render.contribs[k];
          const Splat2D& s = render.splats[static_cast<std::size_t>(rec.splat)];
          SplatGrad& g = acc[static_cast<std::size_t>(rec.splat)];
          if (!seen[static_cast<std::size_t>(rec.splat)]) {
            seen[static_cast<std::size_t>(rec.splat)] = true;
            touched.push_back(rec.splat);
          }
          const double color_dot = s.color.dot(dc);
          g.color += rec.weight * dc;
          const double d_alpha = rec.transmittance * color_dot - suffix / (1.0 - rec.alpha);
          suffix += rec.weight * color_dot;

          const double power = s.power_at(px, py);
          const double gauss = std::exp(power);
          if (s.opacity * gauss > kMaxAlpha) continue;  // clamped: flat in every input
          g.opacity += d_alpha * gauss;
          const double d_power = d_alpha * s.opacity * gauss;
          const double dx = px - s.mean2d.x();
          const double dy = py - s.mean2d.y();
          g.mean2d.x() += d_power * (s.conic_a * dx + s.conic_b * dy);
          g.mean2d.y() += d_power * (s.conic_c * dy + s.conic_b * dx);
          g.conic_a += d_power * (-0.5 * dx * dx);
          g.conic_b += d_power * (-dx * dy);
          g.conic_c += d_power * (-0.5 * dy * dy);
        }
      }
    }
    std::sort(touched.begin(), touched.end());
  });

  std::vector<SplatGrad> splat_grads(splat_count);
  for (std::size_t tile = 0; tile < tile_count; ++tile) {
    for (std::int32_t si : tile_touched[tile]) {
      splat_grads[static_cast<std::size_t>(si)] += tile_grads[tile][static_cast<std::size_t>(si)];
    }
  }

  ParamGrads out(cloud.size());
  const Mat3& w_rot = camera.rotation;
  for (std::size_t si = 0; si < splat_count; ++si) {
    const Splat2D& s = render.splats[si];
    const auto gi = static_cast<std::size_t>(s.gaussian_index);
    if (!render.visible[gi]) continue;
    const SplatGrad& sg = splat_grads[si];

    // Color: identity inside [0,1], flat where the activation clamps.
    const Vec3& raw_color = cloud.colors[gi];
    for (int c = 0; c < 3; ++c) {
      if (raw_color[c] >= 0.0 && raw_color[c] <= 1.0) out.d_colors[gi][c] = sg.color[c];
    }
    const double opacity = s.opacity;
    out.d_raw_opacities[gi] = sg.opacity * opacity * (1.0 - opacity);
    out.viewspace_grads[gi] = sg.mean2d;

    const Mat3 rot = rotation_matrix(cloud.rotations[gi]);
    const Vec3 scale = cloud.log_scales[gi].array().exp();
    const Mat3 m = rot * scale.asDiagonal();
    const Mat3 cov3 = 0.5 * (m * m.transpose() + (m * m.transpose()).transpose());

    const Vec3 t = w_rot * cloud.means[gi] + camera.translation;
    const double z = t.z();
    const double fx = camera.fx, fy = camera.fy;
    Eigen::Matrix<double, 2, 3> jac;
    jac << fx / z, 0.0, -fx * t.x() / (z * z),
           0.0, fy / z, -fy * t.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> tw = jac * w_rot;

    Mat2 conic;
    conic << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
    Mat2 g_conic;
    g_conic << sg.conic_a, 0.5 * sg.conic_b, 0.5 * sg.conic_b, sg.conic_c;
    const Mat2 g_cov2 = -conic * g_conic * conic;

    const Mat3 g_cov3 = tw.transpose() * g_cov2 * tw;
    const Eigen::Matrix<double, 2, 3> g_tw = 2.0 * g_cov2 * tw * cov3;
    const Eigen::Matrix<double, 2, 3> g_jac = g_tw * w_rot.transpose();

    Vec3 g_t = Vec3::Zero();
    g_t.z() += g_jac(0, 0) * (-fx / (z * z));
    g_t.x() += g_jac(0, 2) * (-fx / (z * z));
    g_t.z() += g_jac(0, 2) * (2.0 * fx * t.x() / (z * z * z));
    g_t.z() += g_jac(1, 1) * (-fy / (z * z));
    g_t.y() += g_jac(1, 2) * (-fy / (z * z));
    g_t.z() += g_jac(1, 2) * (2.0 * fy * t.y() / (z * z * z));
    g_t.x() += sg.mean2d.x() * fx / z;
    g_t.z() += sg.mean2d.x() * (-fx * t.x() / (z * z));
    g_t.y() += sg.mean2d.y() * fy / z;
    g_t.z() += sg.mean2d.y() * (-fy * t.y() / (z * z));
    out.d_means[gi] = w_rot.transpose() * g_t;

    const Mat3 g_m = 2.0 * g_cov3 * m;
    const Mat3 g_rot = g_m * scale.asDiagonal();
    for (int k = 0; k < 3; ++k) {
      out.d_log_scales[gi][k] = g_m.col(k).dot(rot.col(k)) * scale[k];
    }
    out.d_rotations[gi] = rotation_backward(cloud.rotations[gi], g_rot);
  }
  return out;
}

ParamGrads finite_diff_grads(const GaussianCloud& cloud, const Camera& camera,
                             const Vec3& background, const ImageLoss& loss_fn, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidInput, "finite-difference step must be positive");
  ParamGrads out(cloud.size());
  GaussianCloud work = cloud;
  auto central_on = [&](double& param) {
    const double saved = param;
    param = saved + eps;
    const double plus = loss_fn(render_view(work, camera, background).image);
    param = saved - eps;
    const double minus = loss_fn(render_view(work, camera, background).image);
    param = saved;
    return (plus - minus) / (2.0 * eps);
  };

  for (std::size_t i = 0; i < work.size(); ++i) {
    for (int k = 0; k < 3; ++k) out.d_means[i][k] = central_on(work.means[i][k]);
    for (int k = 0; k < 3; ++k) out.d_log_scales[i][k] = central_on(work.log_scales[i][k]);
    for (int k = 0; k < 4; ++k) out.d_rotations[i][k] = central_on(work.rotations[i][k]);
    out.d_raw_opacities[i] = central_on(work.raw_opacities[i]);
    for (int k = 0; k < 3; ++k) out.d_colors[i][k] = central_on(work.colors[i][k]);
  }

  // The 2D-mean node: project once, then shift each splat's mean in isolation.
  std::vector<Splat2D> splats;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto s = project_gaussian(camera, activate(cloud, i), static_cast<int>(i))) splats.push_back(*s);
  }
  for (std::size_t si = 0; si < splats.size(); ++si) {
    const auto gi = static_cast<std::size_t>(splats[si].gaussian_index);
    for (int k = 0; k < 2; ++k) {
      auto shifted = splats;
      shifted[si].mean2d[k] += eps;
      const double plus = loss_fn(rasterize(shifted, camera, background, cloud.size()).image);
      shifted[si].mean2d[k] -= 2.0 * eps;
      const double minus = loss_fn(rasterize(shifted, camera, background, cloud.size()).image);
      out.viewspace_grads[gi][k] = (plus - minus) / (2.0 * eps);
    }
  }
  return out;
}

}  // namespace hgs
