#pragma once

#include "hgs/camera.hpp"
#include "hgs/gaussian_model.hpp"
#include "hgs/image.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace hgs {

inline constexpr int kTileSize = 16;
inline constexpr double kLowPassDilation = 0.3;
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1e-4;

/// A Gaussian projected to the image plane. The conic (a, b, c) is the inverse
/// 2D covariance [[a, b], [b, c]].
struct Splat2D {
  Vec2 mean2d;
  double conic_a = 0.0;
  double conic_b = 0.0;
  double conic_c = 0.0;
  double depth = 0.0;
  double opacity = 0.0;
  Vec3 color;
  int gaussian_index = -1;
  /// 3 sigma of the major axis, in pixels.
  double radius = 0.0;
  /// Distance beyond which opacity * G < 1/255, i.e. the exact footprint.
  double support_radius = 0.0;

  double power_at(double px, double py) const {
    const double dx = px - mean2d.x();
    const double dy = py - mean2d.y();
    return -0.5 * (conic_a * dx * dx + conic_c * dy * dy) - conic_b * dx * dy;
  }
};

/// One blended term of a pixel, in front-to-back order.
struct ContribRecord {
  std::int32_t gaussian_index;
  std::int32_t splat;
  double weight;
  double alpha;
  /// Transmittance in front of this term.
  double transmittance;
};

struct RenderOutput {
  Image image;
  std::vector<std::int32_t> rendered_index;
  std::vector<double> final_transmittance;
  std::vector<std::int64_t> pixel_counts;
  std::vector<bool> visible;

  /// contribs[contrib_offsets[p] .. contrib_offsets[p+1]) belong to pixel p.
  std::vector<std::size_t> contrib_offsets;
  std::vector<ContribRecord> contribs;

  /// Splats sorted by (depth, gaussian_index); splat_of_gaussian maps back.
  std::vector<Splat2D> splats;
  std::vector<std::int32_t> splat_of_gaussian;

  Vec3 background = Vec3::Zero();
  /// Fingerprint of the (cloud, camera, background) that produced this output.
  std::uint64_t token = 0;

  int width() const { return image.width(); }
  int height() const { return image.height(); }
  std::size_t gaussian_count() const { return pixel_counts.size(); }
};

/// EWA projection with the affine Jacobian at the mean. Absent when behind the
/// near plane, when the 2D covariance is not invertible, or when the footprint
/// misses the image.
std::optional<Splat2D> project_gaussian(const Camera& camera, const ActivatedGaussian& gaussian,
                                        int gaussian_index);

/// Tile-based front-to-back alpha blending. `gaussian_count` sizes the
/// per-Gaussian outputs; 0 means one past the largest index present.
RenderOutput rasterize(std::vector<Splat2D> splats, const Camera& camera, const Vec3& background,
                       std::size_t gaussian_count = 0);

RenderOutput render_view(const GaussianCloud& cloud, const Camera& camera, const Vec3& background);

std::uint64_t render_token(const GaussianCloud& cloud, const Camera& camera,
                           const Vec3& background);

/// Projected 2D mean per Gaussian, absent where the Gaussian was culled.
std::vector<std::optional<Vec2>> projected_means(const RenderOutput& render);

}  // namespace hgs
