#include "splatgrasp/geometry.hpp"
#include "splatgrasp/error.hpp"
#include "splatgrasp/gaussian_field.hpp"
#include "splatgrasp/query.hpp"
#include "splatgrasp/rasterizer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sg {

void PointCloud::append(const PointCloud& other) {
  const bool keep_colors = (has_colors() || points.empty()) && other.has_colors();
  const bool keep_normals = (has_normals() || points.empty()) && other.has_normals();
  points.insert(points.end(), other.points.begin(), other.points.end());
  if (keep_colors) {
    colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  } else {
    colors.clear();
  }
  if (keep_normals) {
    normals.insert(normals.end(), other.normals.begin(), other.normals.end());
  } else {
    normals.clear();
  }
}

PointCloud backproject(const ImageD& depth, const Camera& camera, const Mask* mask) {
  if (!camera.intrinsics.valid()) throw Error(ErrorCode::BadIntrinsics, "fx and fy must be positive");
  if (depth.width() != camera.width || depth.height() != camera.height) {
    throw Error(ErrorCode::ShapeMismatch, "depth map does not match the camera resolution");
  }
  PointCloud cloud;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double z = depth.at(x, y);
      if (!(z > 0.0) || (mask && !mask->at(x, y))) continue;
      cloud.points.push_back(camera.unproject_world(x, y, z));
    }
  }
  if (cloud.points.empty()) throw Error(ErrorCode::NoValidDepth, "no valid depth pixel to back-project");
  return cloud;
}

NormalMap normals_from_depth(const ImageD& depth, const Camera& camera) {
  if (!camera.intrinsics.valid()) throw Error(ErrorCode::BadIntrinsics, "fx and fy must be positive");
  const int w = depth.width(), h = depth.height();
  NormalMap out{ImageD(w, h, 3), Mask(w, h, 1)};
  std::vector<Vec3> grid(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) grid[y * w + x] = camera.unproject_camera(x, y, depth.at(x, y));
  }
  const Mat3& R = camera.pose.rotation;
  std::size_t valid_count = 0;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      bool ok = true;
      for (int dy = -1; dy <= 1 && ok; ++dy) {
        for (int dx = -1; dx <= 1 && ok; ++dx) ok = depth.at(x + dx, y + dy) > 0.0;
      }
      if (!ok) continue;
      auto P = [&](int dx, int dy) -> const Vec3& { return grid[(y + dy) * w + x + dx]; };
      const Vec3 du = (P(1, -1) + 2 * P(1, 0) + P(1, 1)) - (P(-1, -1) + 2 * P(-1, 0) + P(-1, 1));
      const Vec3 dv = (P(-1, 1) + 2 * P(0, 1) + P(1, 1)) - (P(-1, -1) + 2 * P(0, -1) + P(1, -1));
      Vec3 n = du.cross(dv);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      if (n.dot(-P(0, 0)) < 0.0) n = -n;
      const Vec3 world = R * n;
      for (int c = 0; c < 3; ++c) out.normals.at(x, y, c) = world[c];
      out.valid.at(x, y) = 1;
      ++valid_count;
    }
  }
  if (valid_count == 0) throw Error(ErrorCode::NoValidNeighborhood, "no pixel has a fully valid 3x3 neighborhood");
  return out;
}

PointCloud build_grasp_cloud(const Localization& localization, const GaussianField& field,
                             const GraspCloudOptions& options) {
  if (localization.points.empty()) throw Error(ErrorCode::EmptyQueryResult, "localization selected no points");
  PointCloud cloud;
  for (const LocalizedView& v : localization.views) {
    bool any = false;
    for (std::uint8_t m : v.selected.values()) any |= m != 0;
    if (!any) continue;
    const RenderOutput r = render_forward(field, v.camera, kColorChannel | kDepthChannel | kNormalChannel);
    for (int y = 0; y < v.camera.height; ++y) {
      for (int x = 0; x < v.camera.width; ++x) {
        const double a = r.alpha.at(x, y);
        if (!v.selected.at(x, y) || a < options.min_alpha) continue;
        const Vec3 n(r.normal.at(x, y, 0), r.normal.at(x, y, 1), r.normal.at(x, y, 2));
        if (!(n.norm() > 0.0)) continue;
        cloud.points.push_back(v.camera.unproject_world(x, y, r.depth.at(x, y) / a));
        cloud.colors.push_back(Vec3(r.color.at(x, y, 0), r.color.at(x, y, 1), r.color.at(x, y, 2)) / a);
        cloud.normals.push_back(n.normalized());
      }
    }
  }
  if (options.include_field) {
    for (const GaussianPrimitive& g : field.primitives) {
      cloud.points.push_back(g.mean);
      Vec3 c;
      for (int k = 0; k < 3; ++k) c[k] = std::clamp(sh_dc_to_rgb(g.sh[0][k]), 0.0, 1.0);
      cloud.colors.push_back(c);
      cloud.normals.push_back(g.axis_normal());
    }
  }
  return cloud;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.has_normals()) out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "end_header\n" << std::setprecision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << cloud.points[i].x() << ' ' << cloud.points[i].y() << ' ' << cloud.points[i].z();
    if (cloud.has_colors()) {
      for (int c = 0; c < 3; ++c) out << ' ' << std::lround(std::clamp(cloud.colors[i][c], 0.0, 1.0) * 255.0);
    }
    if (cloud.has_normals()) {
      for (int c = 0; c < 3; ++c) out << ' ' << cloud.normals[i][c];
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

PointCloud read_ply(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, "file not found: '" + path.string() + "'");
  std::ifstream in(path);
  std::string line;
  std::size_t count = 0;
  bool colors = false, normals = false;
  std::getline(in, line);
  if (line != "ply") throw Error(ErrorCode::ParseError, "'" + path.string() + "': not a PLY file");
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string a, b, c;
    ls >> a >> b >> c;
    if (a == "format" && b != "ascii") throw Error(ErrorCode::ParseError, "'" + path.string() + "': only ASCII PLY");
    if (a == "element" && b == "vertex") count = std::stoul(c);
    if (a == "property" && c == "red") colors = true;
    if (a == "property" && c == "nx") normals = true;
  }
  PointCloud cloud;
  for (std::size_t i = 0; i < count; ++i) {
    Vec3 p, n;
    int r = 0, g = 0, b = 0;
    if (!(in >> p.x() >> p.y() >> p.z())) throw Error(ErrorCode::ParseError, "'" + path.string() + "': truncated");
    cloud.points.push_back(p);
    if (colors) {
      in >> r >> g >> b;
      cloud.colors.push_back(Vec3(r, g, b) / 255.0);
    }
    if (normals) {
      in >> n.x() >> n.y() >> n.z();
      cloud.normals.push_back(n);
    }
    if (!in) throw Error(ErrorCode::ParseError, "'" + path.string() + "': truncated");
  }
  return cloud;
}

}  // namespace sg
