#pragma once

#include "splatgrasp/image.hpp"

namespace sg {

/// Scalar loss plus its gradient with respect to the rendered input.
struct LossResult {
  double value = 0.0;
  ImageD grad;
  std::size_t count = 0;  // pixels that contributed
};

/// Mean |rendered - observed| over pixels with observed > 0.
LossResult depth_loss(const ImageD& rendered, const ImageD& observed);

/// Mean over valid pixels of |n_r - n_t|^2 + 1 - n_r . n_t.
LossResult normal_loss(const ImageD& rendered, const ImageD& target, const Mask& valid);

struct SsimResult {
  double value = 0.0;  // mean SSIM over pixels and channels
  ImageD grad;         // d(mean SSIM) / d(first image), filled on request
};

/// SSIM with an 11x11 Gaussian window (sigma 1.5), zero padding,
/// C1 = 0.01^2 and C2 = 0.03^2.
SsimResult ssim(const ImageD& a, const ImageD& b, bool with_grad = false);

/// 0.8 * L1 + 0.2 * (1 - SSIM) over the whole image.
LossResult photometric_loss(const ImageD& rendered, const ImageD& observed);

double psnr(const ImageD& a, const ImageD& b);

}  // namespace sg
