#include "splatgrasp/sh.hpp"

namespace sg {
namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

}  // namespace

void sh_basis(int degree, const Vec3& dir, std::array<double, kShCoeffCount>& b,
              std::array<Vec3, kShCoeffCount>* grad) {
  b.fill(0.0);
  if (grad) grad->fill(Vec3::Zero());
  const double x = dir.x(), y = dir.y(), z = dir.z();
  b[0] = kShC0;
  if (degree < 1) return;

  b[1] = -kC1 * y;
  b[2] = kC1 * z;
  b[3] = -kC1 * x;
  if (grad) {
    auto& g = *grad;
    g[1] = Vec3(0, -kC1, 0);
    g[2] = Vec3(0, 0, kC1);
    g[3] = Vec3(-kC1, 0, 0);
  }
  if (degree < 2) return;

  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, yz = y * z, xz = x * z;
  b[4] = kC2[0] * xy;
  b[5] = kC2[1] * yz;
  b[6] = kC2[2] * (2.0 * zz - xx - yy);
  b[7] = kC2[3] * xz;
  b[8] = kC2[4] * (xx - yy);
  if (grad) {
    auto& g = *grad;
    g[4] = Vec3(kC2[0] * y, kC2[0] * x, 0);
    g[5] = Vec3(0, kC2[1] * z, kC2[1] * y);
    g[6] = Vec3(-2.0 * kC2[2] * x, -2.0 * kC2[2] * y, 4.0 * kC2[2] * z);
    g[7] = Vec3(kC2[3] * z, 0, kC2[3] * x);
    g[8] = Vec3(2.0 * kC2[4] * x, -2.0 * kC2[4] * y, 0);
  }
  if (degree < 3) return;

  b[9] = kC3[0] * y * (3.0 * xx - yy);
  b[10] = kC3[1] * xy * z;
  b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  b[14] = kC3[5] * z * (xx - yy);
  b[15] = kC3[6] * x * (xx - 3.0 * yy);
  if (grad) {
    auto& g = *grad;
    g[9] = Vec3(6.0 * kC3[0] * xy, kC3[0] * (3.0 * xx - 3.0 * yy), 0);
    g[10] = Vec3(kC3[1] * yz, kC3[1] * xz, kC3[1] * xy);
    g[11] = Vec3(-2.0 * kC3[2] * xy, kC3[2] * (4.0 * zz - xx - 3.0 * yy), 8.0 * kC3[2] * yz);
    g[12] = Vec3(-6.0 * kC3[3] * xz, -6.0 * kC3[3] * yz, kC3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy));
    g[13] = Vec3(kC3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * kC3[4] * xy, 8.0 * kC3[4] * xz);
    g[14] = Vec3(2.0 * kC3[5] * xz, -2.0 * kC3[5] * yz, kC3[5] * (xx - yy));
    g[15] = Vec3(kC3[6] * (3.0 * xx - 3.0 * yy), -6.0 * kC3[6] * xy, 0);
  }
}

Vec3 sh_evaluate(const ShCoeffs& coeffs, int degree, const Vec3& dir) {
  std::array<double, kShCoeffCount> b;
  sh_basis(degree, dir, b);
  Vec3 c = Vec3::Zero();
  for (int k = 0; k < sh_coeff_count(degree); ++k) c += b[k] * coeffs[k];
  return c;
}

}  // namespace sg
