#include "splatgrasp/common.hpp"
#include "splatgrasp/error.hpp"

namespace sg {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoValidDepth: return "NoValidDepth";
    case ErrorCode::BadIntrinsics: return "BadIntrinsics";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::NoMasks: return "NoMasks";
    case ErrorCode::MissingTargetFeature: return "MissingTargetFeature";
    case ErrorCode::EmptyQueryResult: return "EmptyQueryResult";
    case ErrorCode::NoValidNeighborhood: return "NoValidNeighborhood";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::NoNearbySurface: return "NoNearbySurface";
    case ErrorCode::DegenerateContacts: return "DegenerateContacts";
    case ErrorCode::NoFeasibleGrasp: return "NoFeasibleGrasp";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  RigidTransform t;
  t.rotation = m.topLeftCorner<3, 3>();
  t.translation = m.topRightCorner<3, 1>();
  return t;
}

RigidTransform RigidTransform::from_row_major(const std::array<double, 16>& v) {
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = v[r * 4 + c];
  }
  return from_matrix(m);
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

std::array<double, 16> RigidTransform::row_major() const {
  const Mat4 m = matrix();
  std::array<double, 16> v{};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) v[r * 4 + c] = m(r, c);
  }
  return v;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

bool RigidTransform::is_rigid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

bool RigidTransform::is_identity() const {
  return rotation == Mat3::Identity() && translation == Vec3::Zero();
}

Mat3 quat_to_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 matrix_to_quat(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  if (out[0] < 0.0) out = -out;
  return out;
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

}  // namespace sg
