#pragma once

#include "splatgrasp/common.hpp"
#include "splatgrasp/image.hpp"

#include <string>

namespace sg {

/// Pinhole intrinsics in pixels. Pixel (u, v) has its center at continuous
/// coordinate (u, v), so the principal ray hits pixel (cx, cy).
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const { return fx > 0.0 && fy > 0.0; }
};

/// Image geometry of one viewpoint: resolution, intrinsics and the
/// camera-to-world pose (world = robot base frame).
struct Camera {
  int width = 0;
  int height = 0;
  Intrinsics intrinsics;
  RigidTransform pose;

  Vec3 position() const { return pose.translation; }
  RigidTransform world_to_camera() const { return pose.inverse(); }

  /// Camera-frame point of pixel (u, v) at depth z (z along the optical axis).
  Vec3 unproject_camera(double u, double v, double z) const;
  Vec3 unproject_world(double u, double v, double z) const { return pose.apply(unproject_camera(u, v, z)); }
  /// Projects a world point; returns (u, v, camera-frame z).
  Vec3 project_world(const Vec3& p) const;

  /// Same view at a different resolution (intrinsics scaled accordingly).
  Camera resized(int new_width, int new_height) const;
};

/// Camera-to-world pose looking from `eye` at `target` (x right, y down, z forward).
/// `up` is the world direction that appears towards the top of the image.
RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// One calibrated RGB-D observation. rgb is H x W x 3 in [0,1]; depth is
/// H x W meters with 0 marking invalid pixels.
struct CameraView {
  std::string id;
  Camera camera;
  ImageD rgb;
  ImageD depth;

  int width() const { return camera.width; }
  int height() const { return camera.height; }
};

/// Throws InvariantViolation / BadIntrinsics if the view breaks its contract.
void validate_view(const CameraView& view, double max_depth, double pose_tol = 1e-6);

}  // namespace sg
