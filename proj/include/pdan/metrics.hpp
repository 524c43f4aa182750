#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pdan/image.hpp"

namespace pdan {

/// PSNR on the luminance channel, borders shaved, dynamic range 1.0.
/// Identical inputs report the defined cap of 100 dB.
inline double psnr_y(const Image& a, const Image& b, int shave) {
  require(a.height() == b.height() && a.width() == b.width(), "psnr_y: shape mismatch");
  int h = 0, w = 0;
  const auto ya = luminance_shaved(a, shave, &h, &w);
  const auto yb = luminance_shaved(b, shave, &h, &w);
  double mse = 0.0;
  for (size_t i = 0; i < ya.size(); ++i) {
    const double d = ya[i] - yb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ya.size());
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> ssim_window(int size, double sigma) {
  std::vector<double> w(static_cast<size_t>(size) * size);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double d2 = (i - r) * (i - r) + (j - r) * (j - r);
      w[static_cast<size_t>(i) * size + j] = std::exp(-d2 / (2.0 * sigma * sigma));
      sum += w[static_cast<size_t>(i) * size + j];
    }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace detail

/// Mean local SSIM on the luminance channel: 11x11 Gaussian window with
/// sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.0, windows fully inside
/// the (shaved) image.
inline double ssim_y(const Image& a, const Image& b, int shave) {
  require(a.height() == b.height() && a.width() == b.width(), "ssim_y: shape mismatch");
  constexpr int kWin = 11;
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  int h = 0, w = 0;
  const auto ya = luminance_shaved(a, shave, &h, &w);
  const auto yb = luminance_shaved(b, shave, &h, &w);
  require(h >= kWin && w >= kWin, "ssim_y: image too small for the 11x11 window");
  static const std::vector<double> win = detail::ssim_window(kWin, 1.5);

  double total = 0.0;
  long long count = 0;
  for (int y = 0; y + kWin <= h; ++y)
    for (int x = 0; x + kWin <= w; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double wij = win[static_cast<size_t>(i) * kWin + j];
          mu_a += wij * ya[static_cast<size_t>(y + i) * w + (x + j)];
          mu_b += wij * yb[static_cast<size_t>(y + i) * w + (x + j)];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double wij = win[static_cast<size_t>(i) * kWin + j];
          const double da = ya[static_cast<size_t>(y + i) * w + (x + j)] - mu_a;
          const double db = yb[static_cast<size_t>(y + i) * w + (x + j)] - mu_b;
          va += wij * da * da;
          vb += wij * db * db;
          cov += wij * da * db;
        }
      total += ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
               ((mu_a * mu_a + mu_b * mu_b + kC1) * (va + vb + kC2));
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace pdan
