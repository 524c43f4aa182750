#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pdan/image.hpp"

namespace pdan {

namespace detail {

// Keys cubic kernel with a = -0.5.
inline double cubic_kernel(double x) {
  x = std::abs(x);
  if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
  if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
  return 0.0;
}

}  // namespace detail

/// Contribution taps of one resampled axis. Weights are normalized to sum to
/// 1 at every output coordinate; out-of-range source indices clamp to the
/// edge (replication). When downscaling, the kernel support widens by the
/// inverse factor (antialiasing).
struct ResampleTap {
  std::vector<int> index;     // clamped source indices
  std::vector<double> weight; // normalized, same length
};

inline std::vector<ResampleTap> resample_taps(int in_size, int out_size) {
  require(in_size > 0 && out_size > 0, "resample: degenerate size");
  const double scale = static_cast<double>(out_size) / in_size;
  const double kscale = std::min(scale, 1.0);
  const double width = 4.0 / kscale;
  const int support = static_cast<int>(std::ceil(width)) + 2;
  std::vector<ResampleTap> taps(static_cast<size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double u = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    ResampleTap tap;
    double sum = 0.0;
    for (int k = 0; k < support; ++k) {
      const int j = left + k;
      const double w = detail::cubic_kernel((u - j) * kscale) * kscale;
      if (w == 0.0) continue;
      tap.index.push_back(std::clamp(j, 0, in_size - 1));
      tap.weight.push_back(w);
      sum += w;
    }
    if (tap.weight.empty()) {  // pathological scale; fall back to nearest
      tap.index.push_back(std::clamp(static_cast<int>(std::lround(u)), 0, in_size - 1));
      tap.weight.push_back(1.0);
      sum = 1.0;
    }
    for (double& w : tap.weight) w /= sum;
    taps[static_cast<size_t>(i)] = std::move(tap);
  }
  return taps;
}

/// Separable bicubic resize of a (C,H,W) tensor to the given output size.
/// Accumulation runs in double.
template <typename T>
Tensor<T> resize_bicubic(const Tensor<T>& chw, int out_h, int out_w) {
  require(chw.rank() == 3, "resize_bicubic expects (C,H,W)");
  const int C = chw.extent(0), H = chw.extent(1), W = chw.extent(2);
  const auto row_taps = resample_taps(H, out_h);
  const auto col_taps = resample_taps(W, out_w);

  // horizontal pass then vertical pass
  Tensor<double> mid(Shape{C, H, out_w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y) {
      const T* src = chw.data() + (static_cast<long long>(c) * H + y) * W;
      double* dst = mid.data() + (static_cast<long long>(c) * H + y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        const auto& tap = col_taps[static_cast<size_t>(x)];
        double acc = 0.0;
        for (size_t k = 0; k < tap.index.size(); ++k)
          acc += tap.weight[k] * static_cast<double>(src[tap.index[k]]);
        dst[x] = acc;
      }
    }
  Tensor<T> out(Shape{C, out_h, out_w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < out_h; ++y) {
      const auto& tap = row_taps[static_cast<size_t>(y)];
      T* dst = out.data() + (static_cast<long long>(c) * out_h + y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (size_t k = 0; k < tap.index.size(); ++k)
          acc += tap.weight[k] * mid[(static_cast<long long>(c) * H + tap.index[k]) * out_w + x];
        dst[x] = static_cast<T>(acc);
      }
    }
  return out;
}

/// Factor form: output extents are round(extent * factor).
inline Image resize_bicubic(const Image& img, double factor) {
  require(factor > 0, "resize factor must be positive");
  const int oh = static_cast<int>(std::lround(img.height() * factor));
  const int ow = static_cast<int>(std::lround(img.width() * factor));
  require(oh > 0 && ow > 0, "resize factor yields a degenerate image");
  Image out;
  out.data = resize_bicubic(img.data, oh, ow);
  out.colorspace = img.colorspace;
  return out;
}

/// Separable Gaussian blur with edge replication.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& chw, int ksize, double sigma) {
  require(chw.rank() == 3, "gaussian_blur expects (C,H,W)");
  require(ksize >= 1 && ksize % 2 == 1, "blur kernel size must be odd");
  require(sigma > 0, "blur sigma must be positive");
  std::vector<double> kernel(static_cast<size_t>(ksize));
  const int r = ksize / 2;
  double sum = 0.0;
  for (int i = 0; i < ksize; ++i) {
    kernel[static_cast<size_t>(i)] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
    sum += kernel[static_cast<size_t>(i)];
  }
  for (double& k : kernel) k /= sum;

  const int C = chw.extent(0), H = chw.extent(1), W = chw.extent(2);
  Tensor<double> mid(Shape{C, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          const int xx = std::clamp(x + k, 0, W - 1);
          acc += kernel[static_cast<size_t>(k + r)] *
                 static_cast<double>(chw[(static_cast<long long>(c) * H + y) * W + xx]);
        }
        mid[(static_cast<long long>(c) * H + y) * W + x] = acc;
      }
  Tensor<T> out(chw.shape());
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          const int yy = std::clamp(y + k, 0, H - 1);
          acc += kernel[static_cast<size_t>(k + r)] *
                 mid[(static_cast<long long>(c) * H + yy) * W + x];
        }
        out[(static_cast<long long>(c) * H + y) * W + x] = static_cast<T>(acc);
      }
  return out;
}

inline Image gaussian_blur(const Image& img, int ksize, double sigma) {
  Image out;
  out.data = gaussian_blur(img.data, ksize, sigma);
  out.colorspace = img.colorspace;
  return out;
}

}  // namespace pdan
