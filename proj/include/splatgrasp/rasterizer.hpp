#pragma once

#include "splatgrasp/camera.hpp"
#include "splatgrasp/gaussian_field.hpp"
#include "splatgrasp/image.hpp"

#include <cstdint>
#include <vector>

namespace sg {

enum RenderChannel : unsigned {
  kColorChannel = 1u << 0,
  kFeatureChannel = 1u << 1,
  kDepthChannel = 1u << 2,
  kNormalChannel = 1u << 3,
  kAllChannels = kColorChannel | kFeatureChannel | kDepthChannel | kNormalChannel,
};

struct RasterSettings {
  int tile_size = 16;
  int sh_degree = kMaxShDegree;
  double near_plane = 0.01;
  double cov2d_inflation = 0.3;       // px^2 added to the 2D covariance diagonal
  double sigma_cutoff = 3.0;          // splat support, in standard deviations
  double min_alpha = 1.0 / 255.0;     // per-splat alpha below this is ignored
  double transmittance_stop = 1e-4;   // compositing ends once T drops below
  double min_determinant = 1e-12;     // smaller 2D determinants are degenerate
};

/// Screen-space state of one visible primitive.
struct ProjectedSplat {
  std::uint32_t index = 0;  // into GaussianField::primitives
  Vec3 cam_point;           // camera-frame mean
  Vec2 mean2d;
  Mat2 cov2d;               // inflated
  Mat2 conic;               // cov2d^-1
  double depth = 0.0;       // camera-frame z
  double radius = 0.0;      // sigma_cutoff * sqrt(largest eigenvalue)
  int tile_x0 = 0, tile_y0 = 0, tile_x1 = 0, tile_y1 = 0;  // inclusive tile range
  double opacity = 0.0;
  Vec3 color;               // SH color + 0.5, clamped at 0
  std::array<bool, 3> color_clamped{};
  Vec3 view_dir;            // unit, camera -> mean
  Vec3 normal;              // shortest axis, facing the camera
  int normal_axis = 0;
  double normal_sign = 1.0;
};

/// Projection result plus per-tile depth-sorted splat lists.
struct SplatCache {
  Camera camera;
  RasterSettings settings;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<ProjectedSplat> splats;
  std::vector<std::uint32_t> tile_offsets;  // tiles_x * tiles_y + 1
  std::vector<std::uint32_t> tile_entries;  // indices into splats
  std::size_t degenerate_count = 0;
  int latent_dim = 0;

  int tile_count() const { return tiles_x * tiles_y; }
};

SplatCache project(const GaussianField& field, const Camera& camera, const RasterSettings& settings = {});

struct RenderOutput {
  ImageD color;    // H x W x 3
  ImageD feature;  // H x W x d_latent
  ImageD depth;    // H x W, camera-frame z composited (not normalized by alpha)
  ImageD normal;   // H x W x 3, world frame, not re-normalized
  ImageD alpha;    // H x W, 1 - final transmittance
  std::size_t degenerate_count = 0;
};

RenderOutput rasterize(const SplatCache& cache, const GaussianField& field, unsigned channels = kAllChannels);

inline RenderOutput render_forward(const GaussianField& field, const Camera& camera,
                                   unsigned channels = kAllChannels, const RasterSettings& settings = {}) {
  return rasterize(project(field, camera, settings), field, channels);
}

/// dLoss/d(rendered map). Empty images stand for zero gradients.
struct RenderGradients {
  ImageD color;
  ImageD feature;
  ImageD depth;
  ImageD normal;
};

/// dLoss/d(parameter) per primitive, in field order.
struct FieldGradients {
  std::vector<Vec3> mean;
  std::vector<Vec4> rotation;  // w.r.t. the stored (possibly unnormalized) quaternion
  std::vector<Vec3> scale;
  std::vector<double> opacity;
  std::vector<ShCoeffs> sh;
  std::vector<double> latent;  // N x d_latent, row-major
  int latent_dim = 0;

  void resize(std::size_t count, int dim);
  std::size_t size() const { return mean.size(); }
};

FieldGradients render_backward(const SplatCache& cache, const GaussianField& field, const RenderGradients& grads);

}  // namespace sg
