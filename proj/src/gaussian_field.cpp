#include "splatgrasp/gaussian_field.hpp"
#include "splatgrasp/error.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace sg {

Mat3 GaussianPrimitive::covariance() const {
  const Mat3 m = rotation_matrix() * scale.asDiagonal();
  return m * m.transpose();
}

int GaussianPrimitive::shortest_axis() const {
  int axis = 0;
  if (scale[1] < scale[axis]) axis = 1;
  if (scale[2] < scale[axis]) axis = 2;
  return axis;
}

bool GaussianPrimitive::operator==(const GaussianPrimitive& o) const {
  if (mean != o.mean || rotation != o.rotation || scale != o.scale || opacity != o.opacity) return false;
  if (latent.size() != o.latent.size() || latent != o.latent) return false;
  for (int k = 0; k < kShCoeffCount; ++k) {
    if (sh[k] != o.sh[k]) return false;
  }
  return true;
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

VoxelKey voxel_of(const Vec3& p, const Vec3& origin, double size) {
  const Vec3 q = (p - origin) / size;
  return {static_cast<std::int64_t>(std::floor(q.x())), static_cast<std::int64_t>(std::floor(q.y())),
          static_cast<std::int64_t>(std::floor(q.z()))};
}

std::size_t count_voxels(std::span<const Vec3> points, const Vec3& origin, double size) {
  std::unordered_set<VoxelKey, VoxelHash> cells;
  cells.reserve(points.size() / 4 + 16);
  for (const auto& p : points) cells.insert(voxel_of(p, origin, size));
  return cells.size();
}

/// Mean distance to the k nearest neighbors via a uniform hash grid.
std::vector<double> mean_neighbor_distance(std::span<const Vec3> points, int k, double cap) {
  const std::size_t n = points.size();
  std::vector<double> out(n, cap);
  if (n < 2) return out;

  AlignedBox box;
  for (const auto& p : points) box.extend(p);
  const Vec3 extent = (box.max - box.min).cwiseMax(1e-9);
  // About two points per occupied cell for surface-like clouds.
  double cell = std::sqrt(extent.x() * extent.y() + extent.y() * extent.z() + extent.x() * extent.z()) /
                std::sqrt(static_cast<double>(n) / 2.0);
  cell = std::max(cell, 1e-6);

  std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelHash> grid;
  for (std::size_t i = 0; i < n; ++i) grid[voxel_of(points[i], box.min, cell)].push_back(static_cast<std::uint32_t>(i));

  std::vector<double> best;
  for (std::size_t i = 0; i < n; ++i) {
    const VoxelKey c = voxel_of(points[i], box.min, cell);
    best.clear();
    for (int r = 0;; ++r) {
      for (std::int64_t dx = -r; dx <= r; ++dx) {
        for (std::int64_t dy = -r; dy <= r; ++dy) {
          for (std::int64_t dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
            if (it == grid.end()) continue;
            for (std::uint32_t j : it->second) {
              if (j == i) continue;
              best.push_back((points[j] - points[i]).norm());
            }
          }
        }
      }
      std::sort(best.begin(), best.end());
      if (best.size() > static_cast<std::size_t>(k)) best.resize(k);
      // Points outside shell r are at least r * cell away.
      const double reach = r * cell;
      if (static_cast<int>(best.size()) == k && best.back() <= reach) break;
      double lower = 0.0;
      for (double d : best) lower += d;
      lower += (k - static_cast<double>(best.size())) * reach;
      if (lower / k >= cap) {
        best.clear();
        break;
      }
    }
    if (!best.empty()) {
      double sum = 0.0;
      for (double d : best) sum += d;
      out[i] = sum / static_cast<double>(best.size());
    }
  }
  return out;
}

Vec4 random_unit_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
    const double n = q.norm();
    if (n > 1e-6) return q / n;
  }
}

VecX random_unit_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    VecX v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
    const double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

}  // namespace

DownsampleResult voxel_downsample(std::span<const Vec3> points, std::span<const Vec3> colors,
                                  std::size_t target_count) {
  DownsampleResult result;
  if (points.empty()) return result;
  if (target_count == 0) throw Error(ErrorCode::InvalidArgument, "target_count must be >= 1");

  AlignedBox box;
  for (const auto& p : points) box.extend(p);
  const Vec3 origin = box.min;

  double chosen = 0.0;
  if (points.size() > target_count) {
    const double diag = std::max((box.max - box.min).norm(), 1e-9);
    double lo = diag * 1e-7;  // small: ~every point its own voxel
    double hi = diag * 2.0;   // large: single voxel
    double best_size = hi;
    std::size_t best_err = std::numeric_limits<std::size_t>::max();
    for (int iter = 0; iter < 60; ++iter) {
      const double mid = std::sqrt(lo * hi);
      const std::size_t count = count_voxels(points, origin, mid);
      const std::size_t err = count > target_count ? count - target_count : target_count - count;
      if (err < best_err) best_err = err, best_size = mid;
      if (static_cast<double>(err) <= 0.02 * static_cast<double>(target_count)) break;
      if (count > target_count) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    chosen = best_size;
  }

  if (chosen <= 0.0) {
    result.points.assign(points.begin(), points.end());
    result.colors.assign(colors.begin(), colors.end());
    return result;
  }

  struct Acc {
    Vec3 p = Vec3::Zero();
    Vec3 c = Vec3::Zero();
    std::size_t n = 0;
  };
  std::unordered_map<VoxelKey, Acc, VoxelHash> cells;
  for (std::size_t i = 0; i < points.size(); ++i) {
    Acc& a = cells[voxel_of(points[i], origin, chosen)];
    a.p += points[i];
    if (!colors.empty()) a.c += colors[i];
    ++a.n;
  }
  std::vector<std::pair<VoxelKey, Acc>> sorted(cells.begin(), cells.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  result.voxel_size = chosen;
  result.points.reserve(sorted.size());
  for (const auto& [key, acc] : sorted) {
    result.points.push_back(acc.p / static_cast<double>(acc.n));
    result.colors.push_back(colors.empty() ? Vec3::Constant(0.5) : Vec3(acc.c / static_cast<double>(acc.n)));
  }
  return result;
}

GaussianField init_from_rgbd(std::span<const CameraView> views, const InitOptions& options) {
  if (options.target_count < 1) throw Error(ErrorCode::InvalidArgument, "target_count must be >= 1");
  if (options.latent_dim < 1) throw Error(ErrorCode::InvalidArgument, "latent_dim must be >= 1");

  std::vector<Vec3> points;
  std::vector<Vec3> colors;
  for (const auto& view : views) {
    if (!view.camera.intrinsics.valid()) {
      throw Error(ErrorCode::BadIntrinsics, "view '" + view.id + "': fx and fy must be positive");
    }
    const bool has_rgb = view.rgb.width() == view.width() && view.rgb.height() == view.height();
    for (int v = 0; v < view.height(); ++v) {
      for (int u = 0; u < view.width(); ++u) {
        const double d = view.depth.at(u, v);
        if (!(d > 0.0) || d >= options.max_depth) continue;
        points.push_back(view.camera.unproject_world(u, v, d));
        colors.push_back(has_rgb ? Vec3(view.rgb.at(u, v, 0), view.rgb.at(u, v, 1), view.rgb.at(u, v, 2))
                                 : Vec3::Constant(0.5));
      }
    }
  }
  if (points.empty()) throw Error(ErrorCode::NoValidDepth, "no valid depth pixel in any view");

  const DownsampleResult sampled = voxel_downsample(points, colors, options.target_count);
  const std::vector<double> spacing =
      mean_neighbor_distance(sampled.points, options.scale_neighbors, options.max_scale);

  std::mt19937_64 rng(options.seed);
  GaussianField field;
  field.primitives.reserve(sampled.points.size());
  for (std::size_t i = 0; i < sampled.points.size(); ++i) {
    GaussianPrimitive g;
    g.mean = sampled.points[i];
    g.rotation = random_unit_quaternion(rng);
    g.scale = Vec3::Constant(std::clamp(spacing[i], options.min_scale, options.max_scale));
    g.opacity = 0.5;
    g.sh.fill(Vec3::Zero());
    for (int c = 0; c < 3; ++c) g.sh[0][c] = rgb_to_sh_dc(sampled.colors[i][c]);
    g.latent = random_unit_vector(rng, options.latent_dim);
    field.primitives.push_back(std::move(g));
  }
  return field;
}

std::vector<std::size_t> select_by_hull(const GaussianField& field, const ConvexHull& hull) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (hull.contains(field.primitives[i].mean, 1e-9)) out.push_back(i);
  }
  return out;
}

TransformResult transform_subset(const GaussianField& field, const ConvexHull& selector,
                                 const RigidTransform& motion) {
  if (selector.empty() || !(selector.volume() > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "hull selector must have positive volume");
  }
  if (!motion.is_rigid(1e-6)) throw Error(ErrorCode::InvalidArgument, "motion is not a rigid transform");

  TransformResult result{field, select_by_hull(field, selector), false};
  result.empty_selection = result.moved.empty();
  if (motion.is_identity()) return result;

  const Vec4 dq = matrix_to_quat(motion.rotation);
  for (std::size_t i : result.moved) {
    GaussianPrimitive& g = result.field.primitives[i];
    g.mean = motion.apply(g.mean);
    g.rotation = quat_multiply(dq, g.rotation);
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const GaussianField& field) {
  detail::BinaryWriter out(path);
  out.magic("GGF1");
  out.u32(static_cast<std::uint32_t>(field.size()));
  out.u32(static_cast<std::uint32_t>(field.latent_dim()));
  const int dim = field.latent_dim();
  for (const auto& g : field.primitives) {
    if (g.latent.size() != dim) throw Error(ErrorCode::InvariantViolation, "mixed latent dimensions in field");
    for (int i = 0; i < 3; ++i) out.f32(g.mean[i]);
    for (int i = 0; i < 4; ++i) out.f32(g.rotation[i]);
    for (int i = 0; i < 3; ++i) out.f32(g.scale[i]);
    out.f32(g.opacity);
    // Coefficient-major, channel-minor: sh[k] = (r, g, b).
    for (int k = 0; k < kShCoeffCount; ++k) {
      for (int c = 0; c < 3; ++c) out.f32(g.sh[k][c]);
    }
    for (int i = 0; i < dim; ++i) out.f32(g.latent[i]);
  }
  out.finish();
}

GaussianField load_checkpoint(const std::filesystem::path& path) {
  detail::BinaryReader in(path);
  in.expect_magic("GGF1");
  const std::uint32_t count = in.u32();
  const std::uint32_t dim = in.u32();
  GaussianField field;
  field.primitives.resize(count);
  for (auto& g : field.primitives) {
    for (int i = 0; i < 3; ++i) g.mean[i] = in.f32();
    for (int i = 0; i < 4; ++i) g.rotation[i] = in.f32();
    for (int i = 0; i < 3; ++i) g.scale[i] = in.f32();
    g.opacity = in.f32();
    for (int k = 0; k < kShCoeffCount; ++k) {
      for (int c = 0; c < 3; ++c) g.sh[k][c] = in.f32();
    }
    g.latent.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) g.latent[i] = in.f32();
  }
  if (!in.at_end()) throw Error(ErrorCode::ParseError, "'" + path.string() + "': trailing bytes after primitives");
  return field;
}

}  // namespace sg
