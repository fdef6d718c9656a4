#include "hgs/gaussian_model.hpp"

#include "hgs/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <string>

namespace hgs {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateRotation: return "degenerate-rotation";
    case ErrorKind::NumericDegeneracy: return "numeric-degeneracy";
    case ErrorKind::IndexOutOfRange: return "index-out-of-range";
    case ErrorKind::InvalidSpec: return "invalid-spec";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::ContractViolation: return "contract-violation";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Diverged: return "diverged";
  }
  return "unknown";
}

void GaussianCloud::validate() const {
  const std::size_t n = means.size();
  if (log_scales.size() != n || rotations.size() != n || raw_opacities.size() != n ||
      colors.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "GaussianCloud arrays differ in length");
  }
}

void GaussianCloud::reserve(std::size_t n) {
  means.reserve(n);
  log_scales.reserve(n);
  rotations.reserve(n);
  raw_opacities.reserve(n);
  colors.reserve(n);
}

void GaussianCloud::push_back(const Vec3& mean, const Vec3& log_scale, const Quat& rotation,
                              double raw_opacity, const Vec3& color) {
  means.push_back(mean);
  log_scales.push_back(log_scale);
  rotations.push_back(rotation);
  raw_opacities.push_back(raw_opacity);
  colors.push_back(color);
}

void GaussianCloud::push_from(const GaussianCloud& other, std::size_t i) {
  push_back(other.means[i], other.log_scales[i], other.rotations[i], other.raw_opacities[i],
            other.colors[i]);
}

GaussianCloud GaussianCloud::filtered(const std::vector<bool>& keep) const {
  if (keep.size() != size()) {
    throw Error(ErrorKind::DimensionMismatch, "filter mask length differs from cloud size");
  }
  GaussianCloud out;
  out.reserve(static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true)));
  for (std::size_t i = 0; i < size(); ++i) {
    if (keep[i]) out.push_from(*this, i);
  }
  return out;
}

Mat3 rotation_matrix(const Quat& q) {
  const double norm = q.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorKind::DegenerateRotation, "quaternion has zero norm");
  }
  const Quat u = q / norm;
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Mat3 build_covariance(const Vec3& log_scale, const Quat& rotation) {
  const Mat3 r = rotation_matrix(rotation);
  const Vec3 s = log_scale.array().exp();
  const Mat3 m = r * s.asDiagonal();
  const Mat3 cov = m * m.transpose();
  return 0.5 * (cov + cov.transpose());
}

double evaluate_gaussian(const Vec3& mean, const Mat3& cov, const Vec3& x) {
  Mat3 c = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(c, Eigen::EigenvaluesOnly);
  const Vec3 ev = eig.eigenvalues();
  if (ev[0] <= 0.0 || ev[2] / ev[0] > 1e12) {
    c.diagonal().array() += 1e-8;
    Eigen::SelfAdjointEigenSolver<Mat3> reg(c, Eigen::EigenvaluesOnly);
    if (!(reg.eigenvalues()[0] > 0.0)) {
      throw Error(ErrorKind::NumericDegeneracy, "covariance is singular after regularization");
    }
  }
  const Vec3 d = x - mean;
  if (d.isZero(0.0)) return 1.0;
  const double q = d.dot(c.ldlt().solve(d));
  return std::exp(-0.5 * q);
}

ActivatedGaussian activate(const GaussianCloud& cloud, std::size_t index) {
  if (index >= cloud.size()) {
    throw Error(ErrorKind::IndexOutOfRange,
                "Gaussian index " + std::to_string(index) + " out of range");
  }
  ActivatedGaussian g;
  g.mean = cloud.means[index];
  g.cov = build_covariance(cloud.log_scales[index], cloud.rotations[index]);
  g.opacity = sigmoid(cloud.raw_opacities[index]);
  g.color = cloud.colors[index].cwiseMax(0.0).cwiseMin(1.0);
  return g;
}

}  // namespace hgs
