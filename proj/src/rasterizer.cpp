#include "splatgrasp/rasterizer.hpp"
#include "splatgrasp/error.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sg {
namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

struct ProjectionTerms {
  Mat3 world_to_cam;
  Vec3 cam_translation;
};

Mat23 projection_jacobian(const Intrinsics& k, const Vec3& t) {
  const double iz = 1.0 / t.z();
  Mat23 j;
  j << k.fx * iz, 0.0, -k.fx * t.x() * iz * iz,
      0.0, k.fy * iz, -k.fy * t.y() * iz * iz;
  return j;
}

/// Per-pixel weight of one splat. Returns false when the pixel is outside the
/// splat support or the alpha is negligible.
inline bool splat_alpha(const ProjectedSplat& s, double px, double py, const RasterSettings& st,
                        double& alpha, double& gauss, Vec2& delta) {
  delta = Vec2(px - s.mean2d.x(), py - s.mean2d.y());
  const double maha = delta.dot(s.conic * delta);
  if (!(maha <= st.sigma_cutoff * st.sigma_cutoff)) return false;
  gauss = std::exp(-0.5 * maha);
  alpha = s.opacity * gauss;
  return alpha >= st.min_alpha;
}

/// d(basis . coeffs) for rotation matrices built from unit quaternion (w,x,y,z).
Vec4 rotation_grad_to_quat(const Mat3& g, const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 dw, dx, dy, dz;
  dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return Vec4(g.cwiseProduct(dw).sum(), g.cwiseProduct(dx).sum(), g.cwiseProduct(dy).sum(),
              g.cwiseProduct(dz).sum());
}

// Slot layout of per-(tile, splat) gradient partials.
constexpr int kSlotMean = 0;      // 2
constexpr int kSlotConic = 2;     // 3: d/dQ00, d/dQ01 (= d/dQ10), d/dQ11
constexpr int kSlotOpacity = 5;   // 1
constexpr int kSlotColor = 6;     // 3
constexpr int kSlotDepth = 9;     // 1
constexpr int kSlotNormal = 10;   // 3
constexpr int kSlotFeature = 13;  // d_latent

}  // namespace

void FieldGradients::resize(std::size_t count, int dim) {
  latent_dim = dim;
  mean.assign(count, Vec3::Zero());
  rotation.assign(count, Vec4::Zero());
  scale.assign(count, Vec3::Zero());
  opacity.assign(count, 0.0);
  ShCoeffs zero;
  zero.fill(Vec3::Zero());
  sh.assign(count, zero);
  latent.assign(count * static_cast<std::size_t>(dim), 0.0);
}

SplatCache project(const GaussianField& field, const Camera& camera, const RasterSettings& settings) {
  if (settings.tile_size != 8 && settings.tile_size != 16 && settings.tile_size != 32) {
    throw Error(ErrorCode::InvalidArgument, "tile_size must be 8, 16 or 32");
  }
  if (!camera.intrinsics.valid()) throw Error(ErrorCode::BadIntrinsics, "fx and fy must be positive");

  SplatCache cache;
  cache.camera = camera;
  cache.settings = settings;
  cache.latent_dim = field.latent_dim();
  const int ts = settings.tile_size;
  cache.tiles_x = (camera.width + ts - 1) / ts;
  cache.tiles_y = (camera.height + ts - 1) / ts;

  const RigidTransform w2c = camera.world_to_camera();
  const Mat3& W = w2c.rotation;
  const Vec3 cam_pos = camera.position();
  const Intrinsics& k = camera.intrinsics;
  const int degree = std::clamp(settings.sh_degree, 0, kMaxShDegree);

  cache.splats.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    const GaussianPrimitive& g = field.primitives[i];
    const Vec3 t = W * g.mean + w2c.translation;
    if (!(t.z() > settings.near_plane)) continue;

    const Mat3 R = g.rotation_matrix();
    const Mat3 M = R * g.scale.asDiagonal();
    const Mat3 sigma = M * M.transpose();
    const Mat23 J = projection_jacobian(k, t);
    const Mat23 T = J * W;
    Mat2 cov = T * sigma * T.transpose();
    cov(0, 0) += settings.cov2d_inflation;
    cov(1, 1) += settings.cov2d_inflation;
    const double det = cov.determinant();
    if (!(det >= settings.min_determinant) || !cov.allFinite()) {
      ++cache.degenerate_count;
      continue;
    }

    ProjectedSplat s;
    s.index = static_cast<std::uint32_t>(i);
    s.cam_point = t;
    s.mean2d = Vec2(k.fx * t.x() / t.z() + k.cx, k.fy * t.y() / t.z() + k.cy);
    s.cov2d = cov;
    s.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    s.depth = t.z();
    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    s.radius = settings.sigma_cutoff * std::sqrt(lambda_max);

    const double x_lo = std::max(0.0, std::ceil(s.mean2d.x() - s.radius));
    const double x_hi = std::min(camera.width - 1.0, std::floor(s.mean2d.x() + s.radius));
    const double y_lo = std::max(0.0, std::ceil(s.mean2d.y() - s.radius));
    const double y_hi = std::min(camera.height - 1.0, std::floor(s.mean2d.y() + s.radius));
    if (!(x_lo <= x_hi) || !(y_lo <= y_hi)) continue;
    s.tile_x0 = static_cast<int>(x_lo) / ts;
    s.tile_x1 = static_cast<int>(x_hi) / ts;
    s.tile_y0 = static_cast<int>(y_lo) / ts;
    s.tile_y1 = static_cast<int>(y_hi) / ts;

    s.opacity = g.opacity;
    const Vec3 to_mean = g.mean - cam_pos;
    s.view_dir = to_mean / to_mean.norm();
    const Vec3 raw = sh_evaluate(g.sh, degree, s.view_dir);
    for (int c = 0; c < 3; ++c) {
      const double v = raw[c] + 0.5;
      s.color_clamped[c] = v < 0.0;
      s.color[c] = s.color_clamped[c] ? 0.0 : v;
    }
    s.normal_axis = g.shortest_axis();
    const Vec3 axis = R.col(s.normal_axis);
    s.normal_sign = axis.dot(cam_pos - g.mean) >= 0.0 ? 1.0 : -1.0;
    s.normal = s.normal_sign * axis;
    cache.splats.push_back(s);
  }

  struct Key {
    std::uint32_t tile;
    double depth;
    std::uint32_t primitive;
    std::uint32_t splat;
  };
  std::vector<Key> keys;
  for (std::uint32_t si = 0; si < cache.splats.size(); ++si) {
    const ProjectedSplat& s = cache.splats[si];
    for (int ty = s.tile_y0; ty <= s.tile_y1; ++ty) {
      for (int tx = s.tile_x0; tx <= s.tile_x1; ++tx) {
        keys.push_back({static_cast<std::uint32_t>(ty * cache.tiles_x + tx), s.depth, s.index, si});
      }
    }
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.tile != b.tile) return a.tile < b.tile;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.primitive < b.primitive;
  });
  cache.tile_offsets.assign(cache.tile_count() + 1, 0);
  cache.tile_entries.resize(keys.size());
  for (std::size_t e = 0; e < keys.size(); ++e) {
    cache.tile_entries[e] = keys[e].splat;
    ++cache.tile_offsets[keys[e].tile + 1];
  }
  for (int t = 0; t < cache.tile_count(); ++t) cache.tile_offsets[t + 1] += cache.tile_offsets[t];
  return cache;
}

RenderOutput rasterize(const SplatCache& cache, const GaussianField& field, unsigned channels) {
  const Camera& cam = cache.camera;
  const RasterSettings& st = cache.settings;
  const int dim = cache.latent_dim;
  const bool want_color = channels & kColorChannel;
  const bool want_feature = (channels & kFeatureChannel) && dim > 0;
  const bool want_depth = channels & kDepthChannel;
  const bool want_normal = channels & kNormalChannel;

  RenderOutput out;
  out.degenerate_count = cache.degenerate_count;
  out.alpha = ImageD(cam.width, cam.height, 1);
  if (want_color) out.color = ImageD(cam.width, cam.height, 3);
  if (want_feature) out.feature = ImageD(cam.width, cam.height, dim);
  if (want_depth) out.depth = ImageD(cam.width, cam.height, 1);
  if (want_normal) out.normal = ImageD(cam.width, cam.height, 3);

  const int ts = st.tile_size;
#pragma omp parallel for schedule(dynamic)
  for (int tile = 0; tile < cache.tile_count(); ++tile) {
    const int tx = tile % cache.tiles_x;
    const int ty = tile / cache.tiles_x;
    const std::uint32_t begin = cache.tile_offsets[tile];
    const std::uint32_t end = cache.tile_offsets[tile + 1];
    if (begin == end) continue;
    for (int py = ty * ts; py < std::min(cam.height, (ty + 1) * ts); ++py) {
      for (int px = tx * ts; px < std::min(cam.width, (tx + 1) * ts); ++px) {
        double T = 1.0;
        double* color = want_color ? out.color.pixel(px, py) : nullptr;
        double* feature = want_feature ? out.feature.pixel(px, py) : nullptr;
        double* depth = want_depth ? out.depth.pixel(px, py) : nullptr;
        double* normal = want_normal ? out.normal.pixel(px, py) : nullptr;
        for (std::uint32_t e = begin; e < end; ++e) {
          const ProjectedSplat& s = cache.splats[cache.tile_entries[e]];
          double alpha, gauss;
          Vec2 delta;
          if (!splat_alpha(s, px, py, st, alpha, gauss, delta)) continue;
          const double w = alpha * T;
          if (color) {
            for (int c = 0; c < 3; ++c) color[c] += w * s.color[c];
          }
          if (feature) {
            const double* l = field.primitives[s.index].latent.data();
            for (int c = 0; c < dim; ++c) feature[c] += w * l[c];
          }
          if (depth) depth[0] += w * s.depth;
          if (normal) {
            for (int c = 0; c < 3; ++c) normal[c] += w * s.normal[c];
          }
          T *= 1.0 - alpha;
          if (T < st.transmittance_stop) break;
        }
        out.alpha.at(px, py) = 1.0 - T;
      }
    }
  }
  return out;
}

FieldGradients render_backward(const SplatCache& cache, const GaussianField& field, const RenderGradients& grads) {
  const Camera& cam = cache.camera;
  const RasterSettings& st = cache.settings;
  const int dim = cache.latent_dim;

  auto check = [&](const ImageD& img, int channels, const char* name) {
    if (img.empty()) return false;
    if (img.width() != cam.width || img.height() != cam.height || img.channels() != channels) {
      throw Error(ErrorCode::ShapeMismatch, std::string("gradient for ") + name + " does not match the view resolution");
    }
    return true;
  };
  const bool g_color = check(grads.color, 3, "color");
  const bool g_feature = dim > 0 && check(grads.feature, dim, "feature");
  const bool g_depth = check(grads.depth, 1, "depth");
  const bool g_normal = check(grads.normal, 3, "normal");

  FieldGradients out;
  out.resize(field.size(), dim);
  if (!g_color && !g_feature && !g_depth && !g_normal) return out;

  const int stride = kSlotFeature + dim;
  std::vector<double> slots(cache.tile_entries.size() * static_cast<std::size_t>(stride), 0.0);

  struct Contribution {
    std::uint32_t entry;
    double alpha;
    double gauss;
    double transmittance;
    Vec2 delta;
  };

  const int ts = st.tile_size;
#pragma omp parallel
  {
    std::vector<Contribution> contribs;
    VecX behind_feature(dim);
#pragma omp for schedule(dynamic)
    for (int tile = 0; tile < cache.tile_count(); ++tile) {
      const int tx = tile % cache.tiles_x;
      const int ty = tile / cache.tiles_x;
      const std::uint32_t begin = cache.tile_offsets[tile];
      const std::uint32_t end = cache.tile_offsets[tile + 1];
      if (begin == end) continue;
      for (int py = ty * ts; py < std::min(cam.height, (ty + 1) * ts); ++py) {
        for (int px = tx * ts; px < std::min(cam.width, (tx + 1) * ts); ++px) {
          contribs.clear();
          double T = 1.0;
          for (std::uint32_t e = begin; e < end; ++e) {
            const ProjectedSplat& s = cache.splats[cache.tile_entries[e]];
            Contribution c;
            if (!splat_alpha(s, px, py, st, c.alpha, c.gauss, c.delta)) continue;
            c.entry = e;
            c.transmittance = T;
            contribs.push_back(c);
            T *= 1.0 - c.alpha;
            if (T < st.transmittance_stop) break;
          }
          if (contribs.empty()) continue;

          const double* gc = g_color ? grads.color.pixel(px, py) : nullptr;
          const double* gf = g_feature ? grads.feature.pixel(px, py) : nullptr;
          const double gd = g_depth ? grads.depth.at(px, py) : 0.0;
          const double* gn = g_normal ? grads.normal.pixel(px, py) : nullptr;

          // Payload composited behind the current splat, seen from just behind it.
          Vec3 behind_color = Vec3::Zero();
          Vec3 behind_normal = Vec3::Zero();
          double behind_depth = 0.0;
          behind_feature.setZero();

          for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
            const ProjectedSplat& s = cache.splats[cache.tile_entries[it->entry]];
            double* slot = slots.data() + static_cast<std::size_t>(it->entry) * stride;
            const double w = it->alpha * it->transmittance;
            const double a = it->alpha;
            double dalpha = 0.0;
            if (gc) {
              for (int c = 0; c < 3; ++c) {
                slot[kSlotColor + c] += gc[c] * w;
                dalpha += gc[c] * (s.color[c] - behind_color[c]);
                behind_color[c] = a * s.color[c] + (1.0 - a) * behind_color[c];
              }
            }
            if (gf) {
              const double* l = field.primitives[s.index].latent.data();
              for (int c = 0; c < dim; ++c) {
                slot[kSlotFeature + c] += gf[c] * w;
                dalpha += gf[c] * (l[c] - behind_feature[c]);
                behind_feature[c] = a * l[c] + (1.0 - a) * behind_feature[c];
              }
            }
            if (g_depth) {
              slot[kSlotDepth] += gd * w;
              dalpha += gd * (s.depth - behind_depth);
              behind_depth = a * s.depth + (1.0 - a) * behind_depth;
            }
            if (gn) {
              for (int c = 0; c < 3; ++c) {
                slot[kSlotNormal + c] += gn[c] * w;
                dalpha += gn[c] * (s.normal[c] - behind_normal[c]);
                behind_normal[c] = a * s.normal[c] + (1.0 - a) * behind_normal[c];
              }
            }
            dalpha *= it->transmittance;

            // alpha = opacity * exp(power), power = -0.5 * delta^T Q delta.
            slot[kSlotOpacity] += dalpha * it->gauss;
            const double dpower = dalpha * a;
            const Vec2 qd = s.conic * it->delta;
            slot[kSlotMean + 0] += dpower * qd.x();
            slot[kSlotMean + 1] += dpower * qd.y();
            slot[kSlotConic + 0] += -0.5 * dpower * it->delta.x() * it->delta.x();
            slot[kSlotConic + 1] += -0.5 * dpower * it->delta.x() * it->delta.y();
            slot[kSlotConic + 2] += -0.5 * dpower * it->delta.y() * it->delta.y();
          }
        }
      }
    }
  }

  // Serial reduction in entry order keeps the sums independent of scheduling.
  std::vector<double> per_splat(cache.splats.size() * static_cast<std::size_t>(stride), 0.0);
  for (std::size_t e = 0; e < cache.tile_entries.size(); ++e) {
    double* dst = per_splat.data() + static_cast<std::size_t>(cache.tile_entries[e]) * stride;
    const double* src = slots.data() + e * stride;
    for (int k = 0; k < stride; ++k) dst[k] += src[k];
  }

  const RigidTransform w2c = cam.world_to_camera();
  const Mat3& W = w2c.rotation;
  const Vec3 cam_pos = cam.position();
  const Intrinsics& K = cam.intrinsics;
  const int degree = std::clamp(st.sh_degree, 0, kMaxShDegree);

#pragma omp parallel for schedule(static)
  for (std::size_t si = 0; si < cache.splats.size(); ++si) {
    const ProjectedSplat& s = cache.splats[si];
    const double* g = per_splat.data() + si * stride;
    const GaussianPrimitive& prim = field.primitives[s.index];
    const std::size_t i = s.index;

    out.opacity[i] = g[kSlotOpacity];
    for (int c = 0; c < dim; ++c) out.latent[i * dim + c] = g[kSlotFeature + c];

    // Conic -> 2D covariance: dCov = -Q dQ Q.
    Mat2 dconic;
    dconic << g[kSlotConic + 0], g[kSlotConic + 1], g[kSlotConic + 1], g[kSlotConic + 2];
    const Mat2 dcov2 = -s.conic * dconic * s.conic;

    const Vec3& t = s.cam_point;
    const Mat23 J = projection_jacobian(K, t);
    const Mat23 JW = J * W;
    const Mat3 R = prim.rotation_matrix();
    const Mat3 M = R * prim.scale.asDiagonal();
    const Mat3 sigma = M * M.transpose();
    const Mat3 sigma_cam = W * sigma * W.transpose();

    const Mat3 dsigma = JW.transpose() * dcov2 * JW;
    const Mat23 dJ = 2.0 * dcov2 * J * sigma_cam;

    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    const double iz3 = iz2 * iz;
    Vec3 dt = Vec3::Zero();
    dt.x() += dJ(0, 2) * (-K.fx * iz2);
    dt.y() += dJ(1, 2) * (-K.fy * iz2);
    dt.z() += dJ(0, 0) * (-K.fx * iz2) + dJ(0, 2) * (2.0 * K.fx * t.x() * iz3) + dJ(1, 1) * (-K.fy * iz2) +
              dJ(1, 2) * (2.0 * K.fy * t.y() * iz3);

    const double du = g[kSlotMean + 0];
    const double dv = g[kSlotMean + 1];
    dt.x() += du * K.fx * iz;
    dt.z() += -du * K.fx * t.x() * iz2;
    dt.y() += dv * K.fy * iz;
    dt.z() += -dv * K.fy * t.y() * iz2;
    dt.z() += g[kSlotDepth];

    Vec3 dmean = W.transpose() * dt;

    // Sigma = M M^T, M = R S.
    const Mat3 dM = 2.0 * dsigma * M;
    Mat3 dR = Mat3::Zero();
    Vec3 dscale = Vec3::Zero();
    for (int col = 0; col < 3; ++col) {
      dR.col(col) = dM.col(col) * prim.scale[col];
      dscale[col] = dM.col(col).dot(R.col(col));
    }
    dR.col(s.normal_axis) += s.normal_sign * Vec3(g[kSlotNormal], g[kSlotNormal + 1], g[kSlotNormal + 2]);

    // Color: raw SH evaluated along the unit view direction.
    const Vec3 dcolor(s.color_clamped[0] ? 0.0 : g[kSlotColor + 0], s.color_clamped[1] ? 0.0 : g[kSlotColor + 1],
                      s.color_clamped[2] ? 0.0 : g[kSlotColor + 2]);
    if (dcolor.squaredNorm() > 0.0) {
      std::array<double, kShCoeffCount> basis;
      std::array<Vec3, kShCoeffCount> dbasis;
      sh_basis(degree, s.view_dir, basis, &dbasis);
      Vec3 ddir = Vec3::Zero();
      for (int k = 0; k < sh_coeff_count(degree); ++k) {
        out.sh[i][k] = basis[k] * dcolor;
        ddir += dcolor.dot(prim.sh[k]) * dbasis[k];
      }
      const Vec3 v = prim.mean - cam_pos;
      const double vn = v.norm();
      dmean += (ddir - s.view_dir * s.view_dir.dot(ddir)) / vn;
    }

    out.mean[i] = dmean;
    out.scale[i] = dscale;

    const double qn = prim.rotation.norm();
    const Vec4 qhat = prim.rotation / qn;
    const Vec4 dqhat = rotation_grad_to_quat(dR, qhat);
    out.rotation[i] = (dqhat - qhat * qhat.dot(dqhat)) / qn;
  }
  return out;
}

}  // namespace sg
