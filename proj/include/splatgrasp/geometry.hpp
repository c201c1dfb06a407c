#pragma once

#include "splatgrasp/camera.hpp"
#include "splatgrasp/common.hpp"
#include "splatgrasp/image.hpp"

#include <filesystem>
#include <vector>

namespace sg {

struct GaussianField;
struct Localization;

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;   // empty or one per point, in [0,1]
  std::vector<Vec3> normals;  // empty or one unit vector per point

  std::size_t size() const { return points.size(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_normals() const { return !normals.empty(); }
  /// Appends `other`; attribute arrays are kept only if both clouds carry them.
  void append(const PointCloud& other);
};

/// World points of every pixel with depth > 0 (and mask != 0 when a mask is given).
PointCloud backproject(const ImageD& depth, const Camera& camera, const Mask* mask = nullptr);

struct NormalMap {
  ImageD normals;  // H x W x 3, world frame, unit where valid
  Mask valid;
};

/// Sobel derivatives of the back-projected point grid; normal = dP/du x dP/dv,
/// oriented towards the camera. Pixels whose 3x3 neighborhood has an invalid
/// depth are invalid.
NormalMap normals_from_depth(const ImageD& depth, const Camera& camera);

struct GraspCloudOptions {
  bool include_field = true;
  double min_alpha = 0.5;
};

/// Object points re-projected from rendered depth inside each view's query
/// mask, plus every primitive mean as scene context. Object normals come from
/// the rendered normal map, context normals from each primitive's shortest axis.
PointCloud build_grasp_cloud(const Localization& localization, const GaussianField& field,
                             const GraspCloudOptions& options = {});

/// ASCII PLY with x y z, then r g b (0-255) and nx ny nz when present.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

}  // namespace sg
