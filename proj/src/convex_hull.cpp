#include "splatgrasp/convex_hull.hpp"
#include "splatgrasp/error.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace sg {
namespace {

struct Face {
  std::array<int, 3> v;
  Vec3 normal;
  double offset;
  bool alive = true;
};

Face make_face(std::span<const Vec3> pts, int a, int b, int c) {
  Face f;
  f.v = {a, b, c};
  f.normal = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
  const double len = f.normal.norm();
  if (len > 0.0) f.normal /= len;
  f.offset = f.normal.dot(pts[a]);
  return f;
}

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace

ConvexHull::ConvexHull(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  half_spaces_.reserve(faces_.size());
  for (const auto& f : faces_) {
    const Face face = make_face(vertices_, f[0], f[1], f[2]);
    half_spaces_.push_back({face.normal, face.offset});
  }
}

bool ConvexHull::contains(const Vec3& p, double tol) const {
  if (half_spaces_.empty()) return false;
  for (const auto& h : half_spaces_) {
    if (h.signed_distance(p) > tol) return false;
  }
  return true;
}

double ConvexHull::volume() const {
  if (faces_.empty()) return 0.0;
  Vec3 center = Vec3::Zero();
  for (const auto& v : vertices_) center += v;
  center /= static_cast<double>(vertices_.size());
  double vol = 0.0;
  for (const auto& f : faces_) {
    const Vec3 a = vertices_[f[0]] - center;
    const Vec3 b = vertices_[f[1]] - center;
    const Vec3 c = vertices_[f[2]] - center;
    vol += a.dot(b.cross(c)) / 6.0;
  }
  return vol;
}

AlignedBox ConvexHull::bounds() const {
  AlignedBox box;
  for (const auto& v : vertices_) box.extend(v);
  return box;
}

ConvexHull ConvexHull::inflated(double margin) const {
  ConvexHull out = *this;
  for (auto& h : out.half_spaces_) h.offset += margin;
  return out;
}

ConvexHull convex_hull(std::span<const Vec3> pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 4) throw Error(ErrorCode::DegenerateInput, "convex hull needs at least 4 points");

  AlignedBox box;
  for (const auto& p : pts) {
    if (!p.allFinite()) throw Error(ErrorCode::DegenerateInput, "convex hull input is not finite");
    box.extend(p);
  }
  const double scale = std::max(1.0, (box.max - box.min).norm());
  const double eps = 1e-12 * scale;

  // Initial simplex from extreme points.
  int i0 = 0;
  for (int i = 1; i < n; ++i) {
    if (pts[i].x() < pts[i0].x()) i0 = i;
  }
  int i1 = -1;
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = (pts[i] - pts[i0]).squaredNorm();
    if (d > best) best = d, i1 = i;
  }
  if (i1 < 0 || std::sqrt(best) <= eps) throw Error(ErrorCode::DegenerateInput, "all points coincide");
  const Vec3 axis = (pts[i1] - pts[i0]).normalized();
  int i2 = -1;
  best = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 d = pts[i] - pts[i0];
    const double dist = (d - axis * axis.dot(d)).norm();
    if (dist > best) best = dist, i2 = i;
  }
  if (i2 < 0 || best <= eps) throw Error(ErrorCode::DegenerateInput, "points are collinear");
  const Vec3 plane_n = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]).normalized();
  int i3 = -1;
  best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dist = std::abs(plane_n.dot(pts[i] - pts[i0]));
    if (dist > best) best = dist, i3 = i;
  }
  if (i3 < 0 || best <= 1e3 * eps) throw Error(ErrorCode::DegenerateInput, "points are coplanar");

  std::vector<Face> faces;
  const Vec3 inner = (pts[i0] + pts[i1] + pts[i2] + pts[i3]) / 4.0;
  auto add_oriented = [&](int a, int b, int c) {
    Face f = make_face(pts, a, b, c);
    if (f.normal.dot(inner) - f.offset > 0.0) f = make_face(pts, a, c, b);
    faces.push_back(f);
  };
  add_oriented(i0, i1, i2);
  add_oriented(i0, i1, i3);
  add_oriented(i0, i2, i3);
  add_oriented(i1, i2, i3);

  std::vector<int> visible;
  std::unordered_set<std::uint64_t> visible_edges;
  std::size_t dead = 0;
  for (int p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    visible.clear();
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
      if (faces[f].alive && faces[f].normal.dot(pts[p]) - faces[f].offset > eps) visible.push_back(f);
    }
    if (visible.empty()) continue;

    visible_edges.clear();
    for (int f : visible) {
      const auto& v = faces[f].v;
      for (int k = 0; k < 3; ++k) visible_edges.insert(edge_key(v[k], v[(k + 1) % 3]));
    }
    for (int f : visible) {
      faces[f].alive = false;
      const auto v = faces[f].v;
      for (int k = 0; k < 3; ++k) {
        const int a = v[k], b = v[(k + 1) % 3];
        if (!visible_edges.contains(edge_key(b, a))) faces.push_back(make_face(pts, a, b, p));
      }
    }

    dead += visible.size();
    // Compact occasionally so the scan stays proportional to the live hull.
    if (dead > 64 && 2 * dead > faces.size()) {
      std::erase_if(faces, [](const Face& f) { return !f.alive; });
      dead = 0;
    }
  }

  std::unordered_map<int, int> remap;
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> out_faces;
  for (const auto& f : faces) {
    if (!f.alive) continue;
    std::array<int, 3> idx;
    for (int k = 0; k < 3; ++k) {
      auto [it, inserted] = remap.try_emplace(f.v[k], static_cast<int>(vertices.size()));
      if (inserted) vertices.push_back(pts[f.v[k]]);
      idx[k] = it->second;
    }
    out_faces.push_back(idx);
  }
  return ConvexHull(std::move(vertices), std::move(out_faces));
}

}  // namespace sg
