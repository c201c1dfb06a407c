#pragma once

#include "splatgrasp/camera.hpp"
#include "splatgrasp/common.hpp"
#include "splatgrasp/convex_hull.hpp"
#include "splatgrasp/sh.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sg {

/// One anisotropic 3D Gaussian carrying color and a latent semantic feature.
struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion (w, x, y, z)
  Vec3 scale = Vec3::Constant(0.01);
  double opacity = 0.5;
  ShCoeffs sh{};  // sh[k] holds the k-th basis coefficient for (r, g, b)
  VecX latent;    // unit norm after every optimizer step

  Mat3 rotation_matrix() const { return quat_to_matrix(rotation.normalized()); }
  /// Sigma = R S S^T R^T.
  Mat3 covariance() const;
  /// Index of the smallest scale component (the surface-normal axis).
  int shortest_axis() const;
  /// Unoriented normal: the rotation column of the shortest axis.
  Vec3 axis_normal() const { return rotation_matrix().col(shortest_axis()); }

  bool operator==(const GaussianPrimitive& other) const;
};

struct GaussianField {
  std::vector<GaussianPrimitive> primitives;
  std::string frame_id = "robot_base";

  std::size_t size() const { return primitives.size(); }
  bool empty() const { return primitives.empty(); }
  int latent_dim() const { return primitives.empty() ? 0 : static_cast<int>(primitives.front().latent.size()); }

  bool operator==(const GaussianField& other) const = default;
};

struct InitOptions {
  std::size_t target_count = 300000;
  int latent_dim = 16;
  std::uint64_t seed = 0;
  double max_depth = 10.0;
  double min_scale = 1e-3;
  double max_scale = 0.1;
  int scale_neighbors = 3;
};

/// Re-projects every valid depth pixel of every view into the world frame,
/// voxel-downsamples the merged cloud to about `target_count` points and turns
/// each point into one primitive.
GaussianField init_from_rgbd(std::span<const CameraView> views, const InitOptions& options);

/// Voxel-grid centroid downsampling; the voxel size is binary-searched so that
/// the output has target_count points within +-10% when the input allows it.
struct DownsampleResult {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;
  double voxel_size = 0.0;
};
DownsampleResult voxel_downsample(std::span<const Vec3> points, std::span<const Vec3> colors,
                                  std::size_t target_count);

/// Indices of primitives whose mean lies inside the hull (inclusive, 1e-9 m).
std::vector<std::size_t> select_by_hull(const GaussianField& field, const ConvexHull& hull);

struct TransformResult {
  GaussianField field;
  std::vector<std::size_t> moved;
  /// Warning status: nothing was inside the hull, field returned unchanged.
  bool empty_selection = false;
};

/// Applies `motion` to every primitive inside `selector`: mean <- motion(mean),
/// rotation <- motion.R * rotation. SH coefficients are not rotated.
TransformResult transform_subset(const GaussianField& field, const ConvexHull& selector,
                                 const RigidTransform& motion);

/// Little-endian "GGF1" checkpoint (f32 payload).
void save_checkpoint(const std::filesystem::path& path, const GaussianField& field);
GaussianField load_checkpoint(const std::filesystem::path& path);

}  // namespace sg
