#include "splatgrasp/losses.hpp"
#include "splatgrasp/error.hpp"

#include <array>
#include <cmath>

namespace sg {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& gaussian_window() {
  static const std::array<double, kWindow> w = [] {
    std::array<double, kWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double x = i - kWindow / 2;
      g[i] = std::exp(-x * x / (2 * kSigma * kSigma));
      sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
  }();
  return w;
}

/// Separable "same" filtering of one channel plane with zero padding.
std::vector<double> blur(const std::vector<double>& src, int w, int h) {
  const auto& g = gaussian_window();
  constexpr int r = kWindow / 2;
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w) s += g[k + r] * src[y * w + xx];
      }
      tmp[y * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h) s += g[k + r] * tmp[yy * w + x];
      }
      out[y * w + x] = s;
    }
  }
  return out;
}

void require_same_shape(const ImageD& a, const ImageD& b, const char* what) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": image shapes differ");
}

}  // namespace

LossResult depth_loss(const ImageD& rendered, const ImageD& observed) {
  require_same_shape(rendered, observed, "depth_loss");
  LossResult r;
  r.grad = ImageD(rendered.width(), rendered.height(), 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < observed.values().size(); ++i) {
    if (observed.values()[i] > 0.0) {
      sum += std::abs(rendered.values()[i] - observed.values()[i]);
      ++r.count;
    }
  }
  if (r.count == 0) throw Error(ErrorCode::NoValidPixels, "depth_loss: observed depth has no valid pixel");
  r.value = sum / r.count;
  const double inv = 1.0 / r.count;
  for (std::size_t i = 0; i < observed.values().size(); ++i) {
    if (observed.values()[i] <= 0.0) continue;
    const double d = rendered.values()[i] - observed.values()[i];
    r.grad.values()[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
  }
  return r;
}

LossResult normal_loss(const ImageD& rendered, const ImageD& target, const Mask& valid) {
  require_same_shape(rendered, target, "normal_loss");
  if (valid.width() != rendered.width() || valid.height() != rendered.height()) {
    throw Error(ErrorCode::ShapeMismatch, "normal_loss: mask shape differs");
  }
  LossResult r;
  r.grad = ImageD(rendered.width(), rendered.height(), 3);
  for (std::uint8_t v : valid.values()) r.count += v != 0;
  if (r.count == 0) throw Error(ErrorCode::NoValidPixels, "normal_loss: no valid pixel");
  const double inv = 1.0 / r.count;
  double sum = 0.0;
  for (int y = 0; y < rendered.height(); ++y) {
    for (int x = 0; x < rendered.width(); ++x) {
      if (!valid.at(x, y)) continue;
      const double* n = rendered.pixel(x, y);
      const double* t = target.pixel(x, y);
      double* g = r.grad.pixel(x, y);
      double sq = 0.0, dot = 0.0;
      for (int c = 0; c < 3; ++c) {
        sq += (n[c] - t[c]) * (n[c] - t[c]);
        dot += n[c] * t[c];
        g[c] = (2.0 * (n[c] - t[c]) - t[c]) * inv;
      }
      sum += sq + 1.0 - dot;
    }
  }
  r.value = sum * inv;
  return r;
}

SsimResult ssim(const ImageD& a, const ImageD& b, bool with_grad) {
  require_same_shape(a, b, "ssim");
  const int w = a.width(), h = a.height(), channels = a.channels();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  SsimResult out;
  if (with_grad) out.grad = ImageD(w, h, channels);
  double total = 0.0;
  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  for (int c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a.values()[i * channels + c];
      y[i] = b.values()[i * channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = blur(x, w, h), my = blur(y, w, h);
    const auto exx = blur(xx, w, h), eyy = blur(yy, w, h), exy = blur(xy, w, h);
    std::vector<double> d_mx, d_exx, d_exy;
    if (with_grad) {
      d_mx.resize(plane);
      d_exx.resize(plane);
      d_exy.resize(plane);
    }
    for (std::size_t i = 0; i < plane; ++i) {
      const double a1 = 2 * mx[i] * my[i] + kC1;
      const double a2 = 2 * (exy[i] - mx[i] * my[i]) + kC2;
      const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1;
      const double b2 = (exx[i] - mx[i] * mx[i]) + (eyy[i] - my[i] * my[i]) + kC2;
      const double s = a1 * a2 / (b1 * b2);
      total += s;
      if (with_grad) {
        d_mx[i] = s * (2 * my[i] / a1 - 2 * my[i] / a2 - 2 * mx[i] / b1 + 2 * mx[i] / b2);
        d_exx[i] = -s / b2;
        d_exy[i] = 2 * s / a2;
      }
    }
    if (with_grad) {
      // The window is symmetric, so the adjoint of the zero-padded blur is itself.
      const auto g_mx = blur(d_mx, w, h), g_exx = blur(d_exx, w, h), g_exy = blur(d_exy, w, h);
      const double norm = 1.0 / (static_cast<double>(plane) * channels);
      for (std::size_t i = 0; i < plane; ++i) {
        out.grad.values()[i * channels + c] = norm * (g_mx[i] + 2 * x[i] * g_exx[i] + y[i] * g_exy[i]);
      }
    }
  }
  out.value = total / (static_cast<double>(plane) * channels);
  return out;
}

LossResult photometric_loss(const ImageD& rendered, const ImageD& observed) {
  require_same_shape(rendered, observed, "photometric_loss");
  LossResult r;
  const std::size_t n = rendered.values().size();
  r.count = rendered.pixel_count();
  const SsimResult s = ssim(rendered, observed, true);
  r.grad = ImageD(rendered.width(), rendered.height(), rendered.channels());
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rendered.values()[i] - observed.values()[i];
    l1 += std::abs(d);
    const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    r.grad.values()[i] = 0.8 * sign / n - 0.2 * s.grad.values()[i];
  }
  r.value = 0.8 * l1 / n + 0.2 * (1.0 - s.value);
  return r;
}

double psnr(const ImageD& a, const ImageD& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    mse += d * d;
  }
  mse /= a.values().size();
  if (mse <= 0.0) return INFINITY;
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace sg
