#pragma once

#include "hgs/math.hpp"

#include <cstddef>
#include <vector>

namespace hgs {

/// Structure-of-arrays storage for the optimizable Gaussians.
///
/// Parameters live in unconstrained spaces:
///   - log_scales:    log of the per-axis standard deviation
///   - rotations:     raw quaternions (w, x, y, z); normalized before use
///   - raw_opacities: logit of the opacity
///   - colors:        constant linear RGB, clamped to [0,1] on activation
struct GaussianCloud {
  std::vector<Vec3> means;
  std::vector<Vec3> log_scales;
  std::vector<Quat> rotations;
  std::vector<double> raw_opacities;
  std::vector<Vec3> colors;

  std::size_t size() const { return means.size(); }
  bool empty() const { return means.empty(); }

  /// Throws ErrorKind::DimensionMismatch if the arrays disagree in length.
  void validate() const;

  void reserve(std::size_t n);
  void push_back(const Vec3& mean, const Vec3& log_scale, const Quat& rotation,
                 double raw_opacity, const Vec3& color);
  /// Appends Gaussian `index` of `other`.
  void push_from(const GaussianCloud& other, std::size_t index);

  /// Keeps the Gaussians whose mask entry is true, preserving order.
  GaussianCloud filtered(const std::vector<bool>& keep) const;

  double opacity(std::size_t i) const { return sigmoid(raw_opacities[i]); }
  double max_scale(std::size_t i) const { return std::exp(log_scales[i].maxCoeff()); }

  friend bool operator==(const GaussianCloud&, const GaussianCloud&) = default;
};

/// A Gaussian with every activation applied.
struct ActivatedGaussian {
  Vec3 mean;
  Mat3 cov;
  double opacity = 0.0;
  Vec3 color;
};

/// Rotation matrix of the normalized quaternion. Throws DegenerateRotation on a
/// zero-norm quaternion.
Mat3 rotation_matrix(const Quat& q);

/// R * diag(exp(log_scale))^2 * R^T, exactly symmetric.
Mat3 build_covariance(const Vec3& log_scale, const Quat& rotation);

/// exp(-1/2 d^T cov^-1 d) with d = x - mean. Near-singular covariances get
/// 1e-8 added to the diagonal; singular ones after that throw NumericDegeneracy.
double evaluate_gaussian(const Vec3& mean, const Mat3& cov, const Vec3& x);

ActivatedGaussian activate(const GaussianCloud& cloud, std::size_t index);

}  // namespace hgs
