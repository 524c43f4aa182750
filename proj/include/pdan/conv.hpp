#pragma once

#include <algorithm>
#include <string>

#include "pdan/common.hpp"
#include "pdan/tensor.hpp"

namespace pdan {

/// Shape contract of a 2D convolution. Stride is fixed at 1 and padding is
/// zero fill; output channel o in group g reads only input channels of
/// group g.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int groups = 1;
  int dilation = 1;
  int padding = 0;

  static int same_padding(int kernel, int dilation) { return dilation * (kernel - 1) / 2; }

  /// Spec with padding chosen to preserve spatial extent.
  static ConvSpec same(int in_c, int out_c, int kernel, int groups = 1, int dilation = 1) {
    return ConvSpec{in_c, out_c, kernel, groups, dilation, same_padding(kernel, dilation)};
  }

  int effective_kernel() const { return dilation * (kernel - 1) + 1; }
  long long weight_count() const {
    return static_cast<long long>(out_channels) * (in_channels / groups) * kernel * kernel;
  }
  Shape weight_shape() const { return {out_channels, in_channels / groups, kernel, kernel}; }

  void validate() const {
    require(in_channels > 0 && out_channels > 0 && kernel > 0 && groups > 0 && dilation > 0 &&
                padding >= 0,
            "conv spec fields must be positive");
    if (in_channels % groups != 0 || out_channels % groups != 0)
      throw ValidationError("conv channels (" + std::to_string(in_channels) + "->" +
                            std::to_string(out_channels) + ") not divisible by groups " +
                            std::to_string(groups) + "; mis-built growth schedule?");
  }

  bool operator==(const ConvSpec&) const = default;
};

namespace detail {

// Valid output range [o0, o1) such that the tap o - padding + k*dilation
// stays inside [0, in_extent).
inline void tap_range(int out_extent, int in_extent, int padding, int k, int dilation, int& o0,
                      int& o1) {
  o0 = std::max(0, padding - k * dilation);
  o1 = std::min(out_extent, in_extent + padding - k * dilation);
}

// Single-sample forward. Accumulation per output element runs in the fixed
// (ic, kh, kw) order; the inner loop walks contiguous rows.
template <typename T>
void conv2d_forward_one(const T* x, int H, int W, const ConvSpec& s, const T* w, const T* bias,
                        T* y, int OH, int OW) {
  const int K = s.kernel, d = s.dilation, p = s.padding;
  const int icg = s.in_channels / s.groups;
  const int ocg = s.out_channels / s.groups;
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < s.out_channels; ++oc) {
    const int g = oc / ocg;
    T* yc = y + static_cast<long long>(oc) * OH * OW;
    const T b = bias ? bias[oc] : T(0);
    for (long long i = 0; i < static_cast<long long>(OH) * OW; ++i) yc[i] = b;
    for (int icl = 0; icl < icg; ++icl) {
      const T* xc = x + static_cast<long long>(g * icg + icl) * H * W;
      const T* wk = w + (static_cast<long long>(oc) * icg + icl) * K * K;
      for (int kh = 0; kh < K; ++kh) {
        int oh0, oh1;
        tap_range(OH, H, p, kh, d, oh0, oh1);
        for (int kw = 0; kw < K; ++kw) {
          int ow0, ow1;
          tap_range(OW, W, p, kw, d, ow0, ow1);
          const T wv = wk[kh * K + kw];
          for (int oh = oh0; oh < oh1; ++oh) {
            const T* xr = xc + static_cast<long long>(oh - p + kh * d) * W + (ow0 - p + kw * d);
            T* yr = yc + static_cast<long long>(oh) * OW + ow0;
            const int n = ow1 - ow0;
            for (int i = 0; i < n; ++i) yr[i] += wv * xr[i];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input_one(const T* gy, int OH, int OW, const ConvSpec& s, const T* w, T* gx,
                               int H, int W) {
  const int K = s.kernel, d = s.dilation, p = s.padding;
  const int icg = s.in_channels / s.groups;
  const int ocg = s.out_channels / s.groups;
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < s.in_channels; ++ic) {
    const int g = ic / icg;
    const int icl = ic % icg;
    T* gxc = gx + static_cast<long long>(ic) * H * W;
    for (int ocl = 0; ocl < ocg; ++ocl) {
      const int oc = g * ocg + ocl;
      const T* gyc = gy + static_cast<long long>(oc) * OH * OW;
      const T* wk = w + (static_cast<long long>(oc) * icg + icl) * K * K;
      for (int kh = 0; kh < K; ++kh) {
        int oh0, oh1;
        tap_range(OH, H, p, kh, d, oh0, oh1);
        for (int kw = 0; kw < K; ++kw) {
          int ow0, ow1;
          tap_range(OW, W, p, kw, d, ow0, ow1);
          const T wv = wk[kh * K + kw];
          for (int oh = oh0; oh < oh1; ++oh) {
            T* gxr = gxc + static_cast<long long>(oh - p + kh * d) * W + (ow0 - p + kw * d);
            const T* gyr = gyc + static_cast<long long>(oh) * OW + ow0;
            const int n = ow1 - ow0;
            for (int i = 0; i < n; ++i) gxr[i] += wv * gyr[i];
          }
        }
      }
    }
  }
}

// Weight/bias gradients accumulate across batch samples; each weight element
// is owned by one thread and summed in a fixed serial order.
template <typename T>
void conv2d_backward_params(const T* x, int N, int H, int W, const ConvSpec& s, const T* gy,
                            int OH, int OW, T* gw, T* gb) {
  const int K = s.kernel, d = s.dilation, p = s.padding;
  const int icg = s.in_channels / s.groups;
  const int ocg = s.out_channels / s.groups;
  const long long x_sample = static_cast<long long>(s.in_channels) * H * W;
  const long long y_sample = static_cast<long long>(s.out_channels) * OH * OW;
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < s.out_channels; ++oc) {
    const int g = oc / ocg;
    for (int icl = 0; icl < icg; ++icl) {
      T* wk = gw + (static_cast<long long>(oc) * icg + icl) * K * K;
      for (int kh = 0; kh < K; ++kh) {
        int oh0, oh1;
        tap_range(OH, H, p, kh, d, oh0, oh1);
        for (int kw = 0; kw < K; ++kw) {
          int ow0, ow1;
          tap_range(OW, W, p, kw, d, ow0, ow1);
          T acc = 0;
          for (int n = 0; n < N; ++n) {
            const T* xc = x + n * x_sample + static_cast<long long>(g * icg + icl) * H * W;
            const T* gyc = gy + n * y_sample + static_cast<long long>(oc) * OH * OW;
            for (int oh = oh0; oh < oh1; ++oh) {
              const T* xr = xc + static_cast<long long>(oh - p + kh * d) * W + (ow0 - p + kw * d);
              const T* gyr = gyc + static_cast<long long>(oh) * OW + ow0;
              const int cnt = ow1 - ow0;
              for (int i = 0; i < cnt; ++i) acc += xr[i] * gyr[i];
            }
          }
          wk[kh * K + kw] = acc;
        }
      }
    }
    if (gb) {
      T acc = 0;
      for (int n = 0; n < N; ++n) {
        const T* gyc = gy + n * y_sample + static_cast<long long>(oc) * OH * OW;
        for (long long i = 0; i < static_cast<long long>(OH) * OW; ++i) acc += gyc[i];
      }
      gb[oc] = acc;
    }
  }
}

}  // namespace detail

template <typename T>
Shape conv2d_output_shape(const Tensor<T>& x, const ConvSpec& spec) {
  spec.validate();
  const int ca = channel_axis(x);
  if (x.extent(ca) != spec.in_channels)
    throw ValidationError("conv2d: input has " + std::to_string(x.extent(ca)) +
                          " channels, spec expects " + std::to_string(spec.in_channels));
  const int H = x.extent(ca + 1), W = x.extent(ca + 2);
  const int OH = H + 2 * spec.padding - spec.effective_kernel() + 1;
  const int OW = W + 2 * spec.padding - spec.effective_kernel() + 1;
  if (OH < 1 || OW < 1)
    throw ValidationError("conv2d: effective kernel extent " +
                          std::to_string(spec.effective_kernel()) +
                          " exceeds padded input " + shape_str(x.shape()));
  if (x.rank() == 4) return {x.extent(0), spec.out_channels, OH, OW};
  return {spec.out_channels, OH, OW};
}

/// 2D (grouped, dilated) convolution, stride 1. `bias` may be empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weights,
                 const Tensor<T>& bias) {
  if (weights.shape() != spec.weight_shape())
    throw ValidationError("conv2d: weight shape " + shape_str(weights.shape()) +
                          " does not match spec " + shape_str(spec.weight_shape()));
  if (!bias.empty() && (bias.rank() != 1 || bias.extent(0) != spec.out_channels))
    throw ValidationError("conv2d: bias shape " + shape_str(bias.shape()) +
                          " does not match out_channels " + std::to_string(spec.out_channels));
  Tensor<T> y(conv2d_output_shape(x, spec));
  const int ca = channel_axis(x);
  const int N = batch_of(x);
  const int H = x.extent(ca + 1), W = x.extent(ca + 2);
  const int OH = y.extent(ca + 1), OW = y.extent(ca + 2);
  const long long x_sample = static_cast<long long>(spec.in_channels) * H * W;
  const long long y_sample = static_cast<long long>(spec.out_channels) * OH * OW;
  for (int n = 0; n < N; ++n)
    detail::conv2d_forward_one(x.data() + n * x_sample, H, W, spec, weights.data(),
                               bias.empty() ? nullptr : bias.data(), y.data() + n * y_sample, OH,
                               OW);
  y.check_finite("conv2d");
  return y;
}

/// Gradients w.r.t. input, weights, and bias; any output pointer may be null
/// to skip that gradient. `gb` is ignored when the forward pass had no bias.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weights,
                     const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const int ca = channel_axis(x);
  const int N = batch_of(x);
  const int H = x.extent(ca + 1), W = x.extent(ca + 2);
  const int OH = gy.extent(ca + 1), OW = gy.extent(ca + 2);
  const long long x_sample = static_cast<long long>(spec.in_channels) * H * W;
  const long long y_sample = static_cast<long long>(spec.out_channels) * OH * OW;
  if (gx) {
    *gx = Tensor<T>(x.shape());
    for (int n = 0; n < N; ++n)
      detail::conv2d_backward_input_one(gy.data() + n * y_sample, OH, OW, spec, weights.data(),
                                        gx->data() + n * x_sample, H, W);
  }
  if (gw || gb) {
    Tensor<T> gw_local(spec.weight_shape());
    Tensor<T> gb_local(Shape{spec.out_channels});
    detail::conv2d_backward_params(x.data(), N, H, W, spec, gy.data(), OH, OW, gw_local.data(),
                                   gb ? gb_local.data() : nullptr);
    if (gw) *gw = std::move(gw_local);
    if (gb) *gb = std::move(gb_local);
  }
}

}  // namespace pdan
