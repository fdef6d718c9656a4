#pragma once

#include "hgs/math.hpp"

namespace hgs {

inline constexpr double kNearPlane = 0.01;

/// Pinhole camera. World-to-camera transform is x_cam = rotation * x + translation,
/// with +z pointing into the scene and pixel centers at integer coordinates.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int view_id = 0;

  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Throws InvalidSpec on non-positive focal lengths, images below 8x8, or a
  /// rotation that is not orthonormal within 1e-9.
  void validate() const;
};

struct PointProjection {
  Vec2 pixel;
  double depth = 0.0;
  bool visible = false;
};

PointProjection project_point(const Camera& camera, const Vec3& x);

/// World-to-camera pose looking from `eye` at `target`; camera y points down.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up, double fx, double fy,
               int width, int height, int view_id);

}  // namespace hgs
