#include "hgs/camera.hpp"

#include "hgs/error.hpp"

#include <string>

namespace hgs {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "camera focal lengths must be positive");
  }
  if (width < 8 || height < 8) {
    throw Error(ErrorKind::InvalidSpec, "camera images must be at least 8x8");
  }
  const double err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-9) {
    throw Error(ErrorKind::InvalidSpec,
                "camera " + std::to_string(view_id) + " rotation is not orthonormal");
  }
}

PointProjection project_point(const Camera& camera, const Vec3& x) {
  const Vec3 p = camera.rotation * x + camera.translation;
  PointProjection out;
  out.depth = p.z();
  out.visible = p.z() > kNearPlane;
  if (p.z() != 0.0) {
    out.pixel = {camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy};
  } else {
    out.pixel = {camera.cx, camera.cy};
  }
  return out;
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up, double fx, double fy,
               int width, int height, int view_id) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(world_up);
  if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);

  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.view_id = view_id;
  return cam;
}

}  // namespace hgs
