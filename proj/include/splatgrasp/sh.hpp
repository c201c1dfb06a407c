#pragma once

#include "splatgrasp/common.hpp"

#include <array>

namespace sg {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kShCoeffCount = 16;  // (kMaxShDegree + 1)^2 per color channel
inline constexpr double kShC0 = 0.28209479177387814;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

using ShCoeffs = std::array<Vec3, kShCoeffCount>;

/// Real SH basis in the 3DGS sign convention, evaluated for a unit direction.
/// When `grad` is given it receives d(basis_k)/d(x, y, z) treating the three
/// components as independent (the caller chains through normalization).
void sh_basis(int degree, const Vec3& dir, std::array<double, kShCoeffCount>& basis,
              std::array<Vec3, kShCoeffCount>* grad = nullptr);

/// Raw (unclamped, un-offset) SH color for `dir`.
Vec3 sh_evaluate(const ShCoeffs& coeffs, int degree, const Vec3& dir);

inline double rgb_to_sh_dc(double c) { return (c - 0.5) / kShC0; }
inline double sh_dc_to_rgb(double v) { return v * kShC0 + 0.5; }

}  // namespace sg
