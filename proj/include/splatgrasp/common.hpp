#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <limits>

namespace sg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::MatrixXd;

/// Rigid transform x -> R x + t. Used both for camera poses (camera to world)
/// and for object motions applied to the field.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4& m);
  /// Row-major 4x4, as stored in manifests and proposal files.
  static RigidTransform from_row_major(const std::array<double, 16>& values);

  Mat4 matrix() const;
  std::array<double, 16> row_major() const;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& other) const;

  /// Orthonormal rotation with det = +1, both within `tol`.
  bool is_rigid(double tol = 1e-6) const;
  bool is_identity() const;
};

/// Unit quaternion stored as (w, x, y, z).
Mat3 quat_to_matrix(const Vec4& q);
Vec4 matrix_to_quat(const Mat3& r);
Vec4 quat_multiply(const Vec4& a, const Vec4& b);

struct AlignedBox {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool empty() const { return (min.array() > max.array()).any(); }
  bool contains(const Vec3& p, double slack = 0.0) const {
    return (p.array() >= min.array() - slack).all() && (p.array() <= max.array() + slack).all();
  }
};

}  // namespace sg
