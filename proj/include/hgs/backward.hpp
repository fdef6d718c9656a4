#pragma once

#include "hgs/camera.hpp"
#include "hgs/gaussian_model.hpp"
#include "hgs/image.hpp"
#include "hgs/renderer.hpp"

#include <functional>
#include <vector>

namespace hgs {

struct ParamGrads {
  std::vector<Vec3> d_means;
  std::vector<Vec3> d_log_scales;
  std::vector<Quat> d_rotations;
  std::vector<double> d_raw_opacities;
  std::vector<Vec3> d_colors;
  /// dL/d(projected 2D mean) in pixels; zero for Gaussians not visible.
  std::vector<Vec2> viewspace_grads;

  explicit ParamGrads(std::size_t n = 0);
  std::size_t size() const { return d_means.size(); }
  bool all_finite() const;
};

/// Reverse-mode gradients of a view loss given dL/d(image). `render` must come
/// from render_view(cloud, camera, ...) with the same inputs; a mismatched
/// token throws ContractViolation.
ParamGrads backward_view(const GaussianCloud& cloud, const Camera& camera,
                         const RenderOutput& render, const Image& d_image);

using ImageLoss = std::function<double(const Image&)>;

/// Central differences over every parameter (2 renders each). viewspace_grads
/// are taken by shifting the projected 2D mean directly before rasterization.
/// Meant for tiny clouds and images.
ParamGrads finite_diff_grads(const GaussianCloud& cloud, const Camera& camera,
                             const Vec3& background, const ImageLoss& loss_fn, double eps);

}  // namespace hgs
