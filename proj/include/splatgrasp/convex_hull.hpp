#pragma once

#include "splatgrasp/common.hpp"

#include <span>
#include <vector>

namespace sg {

/// Closed half-space { x : normal . x <= offset } with unit normal.
struct HalfSpace {
  Vec3 normal;
  double offset = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

/// Triangulated 3D convex polytope. Faces are counter-clockwise seen from
/// outside; half_spaces()[i] is the supporting plane of faces()[i].
class ConvexHull {
 public:
  ConvexHull() = default;
  ConvexHull(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& faces() const { return faces_; }
  const std::vector<HalfSpace>& half_spaces() const { return half_spaces_; }

  bool empty() const { return faces_.empty(); }
  /// Inclusive test: every half-space satisfied with `tol` slack.
  bool contains(const Vec3& p, double tol = 1e-9) const;
  double volume() const;
  AlignedBox bounds() const;

  /// Same polytope with every face pushed outward by `margin` meters.
  /// Vertices are kept as the original (still interior) points.
  ConvexHull inflated(double margin) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<HalfSpace> half_spaces_;
};

/// Incremental 3D hull. Throws DegenerateInput for fewer than 4 points or
/// collinear / coplanar sets.
ConvexHull convex_hull(std::span<const Vec3> points);

}  // namespace sg
