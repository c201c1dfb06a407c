#pragma once

// Shared fixtures and brute-force oracles for the test suites.

#include "splatgrasp/camera.hpp"
#include "splatgrasp/gaussian_field.hpp"
#include "splatgrasp/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace sg::test {

inline VecX random_unit_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n;
  VecX v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v.normalized();
}

inline Camera make_camera(int width, int height, double focal, const RigidTransform& pose) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.intrinsics = {focal, focal, (width - 1) / 2.0, (height - 1) / 2.0};
  cam.pose = pose;
  return cam;
}

/// Random primitives scattered around the origin, seen by a camera at distance ~3.
inline GaussianField random_field(std::mt19937_64& rng, int count, int latent_dim, double spread = 0.6,
                                  double min_scale = 0.05, double max_scale = 0.25, double min_opacity = 0.05,
                                  double max_opacity = 0.95, int sh_degree = 3) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> sc(min_scale, max_scale);
  std::uniform_real_distribution<double> op(min_opacity, max_opacity);
  std::normal_distribution<double> n;
  GaussianField field;
  for (int i = 0; i < count; ++i) {
    GaussianPrimitive g;
    g.mean = Vec3(u(rng), u(rng), u(rng)) * spread;
    g.rotation = Vec4(n(rng), n(rng), n(rng), n(rng)).normalized();
    g.scale = Vec3(sc(rng), sc(rng), sc(rng));
    g.opacity = op(rng);
    g.sh.fill(Vec3::Zero());
    for (int k = 0; k < sh_coeff_count(sh_degree); ++k) {
      g.sh[k] = Vec3(n(rng), n(rng), n(rng)) * (k == 0 ? 0.8 : 0.15);
    }
    g.latent = random_unit_vector(rng, latent_dim);
    field.primitives.push_back(g);
  }
  return field;
}

/// 2D mean and covariance from the full 3x4 projection matrix: the Jacobian of
/// (a/c, b/c) with (a, b, c) = P [X; 1] via the quotient rule.
struct OracleProjection {
  bool visible = false;
  Vec2 mean;
  Mat2 cov;
  double depth = 0.0;
};

inline OracleProjection oracle_project(const GaussianPrimitive& g, const Camera& cam, double inflation = 0.3,
                                       double near_plane = 0.01) {
  Eigen::Matrix<double, 3, 4> K = Eigen::Matrix<double, 3, 4>::Zero();
  K(0, 0) = cam.intrinsics.fx;
  K(0, 2) = cam.intrinsics.cx;
  K(1, 1) = cam.intrinsics.fy;
  K(1, 2) = cam.intrinsics.cy;
  K(2, 2) = 1.0;
  const Mat4 view = cam.pose.matrix().inverse();
  const Eigen::Matrix<double, 3, 4> P = K * view;
  const Vec3 h = P * g.mean.homogeneous();
  OracleProjection out;
  out.depth = (view * g.mean.homogeneous()).z();
  if (out.depth <= near_plane) return out;
  out.visible = true;
  out.mean = Vec2(h.x() / h.z(), h.y() / h.z());
  Eigen::Matrix<double, 2, 3> J;
  for (int j = 0; j < 3; ++j) {
    J(0, j) = (P(0, j) * h.z() - h.x() * P(2, j)) / (h.z() * h.z());
    J(1, j) = (P(1, j) * h.z() - h.y() * P(2, j)) / (h.z() * h.z());
  }
  const Mat3 R = quat_to_matrix(g.rotation.normalized());
  const Mat3 S = g.scale.asDiagonal();
  out.cov = J * (R * S * S * R.transpose()) * J.transpose() + inflation * Mat2::Identity();
  return out;
}

/// Per pixel, sorts every primitive by depth and composites them directly.
inline RenderOutput naive_render(const GaussianField& field, const Camera& cam, const RasterSettings& st = {}) {
  const int dim = field.latent_dim();
  RenderOutput out;
  out.color = ImageD(cam.width, cam.height, 3);
  out.feature = ImageD(cam.width, cam.height, dim);
  out.depth = ImageD(cam.width, cam.height, 1);
  out.normal = ImageD(cam.width, cam.height, 3);
  out.alpha = ImageD(cam.width, cam.height, 1);

  struct Item {
    double depth;
    std::size_t index;
    OracleProjection proj;
    Vec3 color;
    Vec3 normal;
  };
  std::vector<Item> items;
  const Vec3 eye = cam.pose.translation;
  for (std::size_t i = 0; i < field.size(); ++i) {
    const GaussianPrimitive& g = field.primitives[i];
    OracleProjection p = oracle_project(g, cam, st.cov2d_inflation, st.near_plane);
    if (!p.visible || p.cov.determinant() < st.min_determinant) continue;
    const Vec3 dir = (g.mean - eye).normalized();
    Vec3 color = sh_evaluate(g.sh, st.sh_degree, dir) + Vec3::Constant(0.5);
    color = color.cwiseMax(0.0);
    const Mat3 R = quat_to_matrix(g.rotation.normalized());
    int axis = 0;
    for (int k = 1; k < 3; ++k) {
      if (g.scale[k] < g.scale[axis]) axis = k;
    }
    Vec3 n = R.col(axis);
    if (n.dot(eye - g.mean) < 0.0) n = -n;
    items.push_back({p.depth, i, p, color, n});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
  });
  const double cutoff2 = st.sigma_cutoff * st.sigma_cutoff;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double T = 1.0;
      for (const Item& it : items) {
        const Vec2 d = Vec2(x, y) - it.proj.mean;
        const double maha = d.dot(it.proj.cov.inverse() * d);
        if (maha > cutoff2) continue;
        const double a = field.primitives[it.index].opacity * std::exp(-0.5 * maha);
        if (a < st.min_alpha) continue;
        const double w = a * T;
        for (int c = 0; c < 3; ++c) out.color.at(x, y, c) += w * it.color[c];
        for (int c = 0; c < dim; ++c) out.feature.at(x, y, c) += w * field.primitives[it.index].latent[c];
        out.depth.at(x, y) += w * it.depth;
        for (int c = 0; c < 3; ++c) out.normal.at(x, y, c) += w * it.normal[c];
        T *= 1.0 - a;
        if (T < st.transmittance_stop) break;
      }
      out.alpha.at(x, y) = 1.0 - T;
    }
  }
  return out;
}

inline double max_abs_diff(const ImageD& a, const ImageD& b) {
  if (!a.same_shape(b)) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

/// Smallest distance of any per-pixel quantity to a compositing threshold.
/// Finite differences are only meaningful when this is comfortably positive.
inline double threshold_margin(const GaussianField& field, const Camera& cam, const RasterSettings& st = {}) {
  double margin = INFINITY;
  const SplatCache cache = project(field, cam, st);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      std::vector<std::pair<double, std::size_t>> order;
      for (std::size_t s = 0; s < cache.splats.size(); ++s) order.push_back({cache.splats[s].depth, s});
      std::sort(order.begin(), order.end());
      double T = 1.0;
      for (auto [depth, s] : order) {
        const ProjectedSplat& sp = cache.splats[s];
        const Vec2 d = Vec2(x, y) - sp.mean2d;
        const double maha = d.dot(sp.conic * d);
        margin = std::min(margin, std::abs(maha - st.sigma_cutoff * st.sigma_cutoff));
        if (maha > st.sigma_cutoff * st.sigma_cutoff) continue;
        const double a = sp.opacity * std::exp(-0.5 * maha);
        margin = std::min(margin, std::abs(std::log(a * 255.0)));
        if (a < st.min_alpha) continue;
        T *= 1.0 - a;
        margin = std::min(margin, std::abs(std::log(T / st.transmittance_stop)));
        if (T < st.transmittance_stop) break;
      }
    }
  }
  return margin;
}

/// Visits every scalar parameter of a field (for finite differences).
inline void for_each_parameter(GaussianField& field,
                               const std::function<void(const char* group, std::size_t prim, int k, double& v)>& fn) {
  for (std::size_t i = 0; i < field.size(); ++i) {
    GaussianPrimitive& g = field.primitives[i];
    for (int k = 0; k < 3; ++k) fn("mean", i, k, g.mean[k]);
    for (int k = 0; k < 4; ++k) fn("rotation", i, k, g.rotation[k]);
    for (int k = 0; k < 3; ++k) fn("scale", i, k, g.scale[k]);
    fn("opacity", i, 0, g.opacity);
    for (int k = 0; k < kShCoeffCount; ++k) {
      for (int c = 0; c < 3; ++c) fn("sh", i, k * 3 + c, g.sh[k][c]);
    }
    for (int k = 0; k < g.latent.size(); ++k) fn("latent", i, k, g.latent[k]);
  }
}

inline double gradient_of(const FieldGradients& grads, const char* group, std::size_t prim, int k) {
  const std::string g = group;
  if (g == "mean") return grads.mean[prim][k];
  if (g == "rotation") return grads.rotation[prim][k];
  if (g == "scale") return grads.scale[prim][k];
  if (g == "opacity") return grads.opacity[prim];
  if (g == "sh") return grads.sh[prim][k / 3][k % 3];
  return grads.latent[prim * grads.latent_dim + k];
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace sg::test
