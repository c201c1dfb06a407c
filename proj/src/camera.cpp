#include "splatgrasp/camera.hpp"
#include "splatgrasp/error.hpp"

#include <cmath>

namespace sg {

Vec3 Camera::unproject_camera(double u, double v, double z) const {
  return Vec3((u - intrinsics.cx) / intrinsics.fx * z, (v - intrinsics.cy) / intrinsics.fy * z, z);
}

Vec3 Camera::project_world(const Vec3& p) const {
  const Vec3 c = pose.rotation.transpose() * (p - pose.translation);
  return Vec3(intrinsics.fx * c.x() / c.z() + intrinsics.cx,
              intrinsics.fy * c.y() / c.z() + intrinsics.cy, c.z());
}

Camera Camera::resized(int new_width, int new_height) const {
  Camera out = *this;
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  out.width = new_width;
  out.height = new_height;
  out.intrinsics.fx *= sx;
  out.intrinsics.fy *= sy;
  // Pixel centers sit on integer coordinates, so the edge is at -0.5.
  out.intrinsics.cx = (intrinsics.cx + 0.5) * sx - 0.5;
  out.intrinsics.cy = (intrinsics.cy + 0.5) * sy - 0.5;
  return out;
}

RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(std::abs(forward.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  RigidTransform pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

void validate_view(const CameraView& view, double max_depth, double pose_tol) {
  const std::string where = "view '" + view.id + "'";
  if (!view.camera.intrinsics.valid()) {
    throw Error(ErrorCode::BadIntrinsics, where + ": fx and fy must be positive");
  }
  if (!view.camera.pose.is_rigid(pose_tol)) {
    throw Error(ErrorCode::InvariantViolation, where + ": pose rotation is not orthonormal");
  }
  if (view.rgb.width() != view.width() || view.rgb.height() != view.height() || view.rgb.channels() != 3) {
    throw Error(ErrorCode::InvariantViolation, where + ": rgb resolution does not match camera");
  }
  if (view.depth.width() != view.width() || view.depth.height() != view.height() ||
      view.depth.channels() != 1) {
    throw Error(ErrorCode::InvariantViolation, where + ": depth resolution does not match camera");
  }
  for (double d : view.depth.values()) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw Error(ErrorCode::InvariantViolation, where + ": depth must be finite and >= 0");
    }
    if (d >= max_depth) {
      throw Error(ErrorCode::InvariantViolation, where + ": depth beyond configured max range");
    }
  }
}

}  // namespace sg
