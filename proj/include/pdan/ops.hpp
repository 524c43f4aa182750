#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pdan/common.hpp"
#include "pdan/tensor.hpp"

namespace pdan {

// ---------------------------------------------------------------------------
// Pointwise

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (long long i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

// Subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& gy) {
  Tensor<T> gx(x.shape());
  for (long long i = 0; i < x.numel(); ++i) gx[i] = x[i] > T(0) ? gy[i] : T(0);
  return gx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (long long i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy) {
  Tensor<T> gx(y.shape());
  for (long long i = 0; i < y.numel(); ++i) gx[i] = gy[i] * y[i] * (T(1) - y[i]);
  return gx;
}

// ---------------------------------------------------------------------------
// Batch normalization

/// Running statistics of a batch-norm layer. The learnable gamma/beta live
/// with the model's other parameters; BatchNormState bundles both for the
/// standalone op.
template <typename T>
struct BnBuffers {
  Tensor<T> running_mean, running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);
  long long update_count = 0;

  BnBuffers() = default;
  explicit BnBuffers(int channels, T momentum_ = T(0.1), T epsilon_ = T(1e-5))
      : running_mean(Shape{channels}, T(0)),
        running_var(Shape{channels}, T(1)),
        momentum(momentum_),
        epsilon(epsilon_) {}

  int channels() const { return running_mean.extent(0); }
};

template <typename T>
struct BatchNormState {
  Tensor<T> gamma, beta;
  BnBuffers<T> buffers;

  BatchNormState() = default;
  explicit BatchNormState(int channels, T momentum = T(0.1), T epsilon = T(1e-5))
      : gamma(Shape{channels}, T(1)), beta(Shape{channels}, T(0)),
        buffers(channels, momentum, epsilon) {}
};

template <typename T>
struct BnCache {
  Tensor<T> mean, invstd;  // per channel, as used by the forward pass
};

/// Training mode normalizes by batch statistics (biased variance) and blends
/// them into the running stats; inference mode uses the running stats and
/// refuses to run before the first update.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BnBuffers<T>& state, bool training, BnCache<T>* cache = nullptr) {
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  if (C != state.channels() || gamma.numel() != C || beta.numel() != C)
    throw ValidationError("batchnorm2d: input has " + std::to_string(C) + " channels, state has " +
                          std::to_string(state.channels()));
  const int N = batch_of(x);
  const long long plane = static_cast<long long>(x.extent(ca + 1)) * x.extent(ca + 2);
  const long long sample = static_cast<long long>(C) * plane;
  const long long m = static_cast<long long>(N) * plane;

  Tensor<T> mean(Shape{C}), invstd(Shape{C});
  if (training) {
    for (int c = 0; c < C; ++c) {
      T sum = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = x.data() + n * sample + c * plane;
        for (long long i = 0; i < plane; ++i) sum += p[i];
      }
      const T mu = sum / static_cast<T>(m);
      T sq = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = x.data() + n * sample + c * plane;
        for (long long i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const T var = sq / static_cast<T>(m);
      mean[c] = mu;
      invstd[c] = T(1) / std::sqrt(var + state.epsilon);
      state.running_mean[c] = (T(1) - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] = (T(1) - state.momentum) * state.running_var[c] + state.momentum * var;
    }
    state.update_count += 1;
  } else {
    if (state.update_count == 0)
      throw ValidationError("batchnorm2d: inference requested before any running-stat update");
    for (int c = 0; c < C; ++c) {
      mean[c] = state.running_mean[c];
      invstd[c] = T(1) / std::sqrt(state.running_var[c] + state.epsilon);
    }
  }

  Tensor<T> y(x.shape());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* p = x.data() + n * sample + c * plane;
      T* q = y.data() + n * sample + c * plane;
      const T mu = mean[c], is = invstd[c], ga = gamma[c], be = beta[c];
      for (long long i = 0; i < plane; ++i) q[i] = ga * (p[i] - mu) * is + be;
    }
  }
  if (cache) *cache = BnCache<T>{std::move(mean), std::move(invstd)};
  return y;
}

/// Standalone form with gamma/beta bundled in the state.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& state, bool training,
                      BnCache<T>* cache = nullptr) {
  return batchnorm2d(x, state.gamma, state.beta, state.buffers, training, cache);
}

template <typename T>
void batchnorm2d_backward(const Tensor<T>& x, const Tensor<T>& gamma, const BnCache<T>& cache,
                          bool training, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>* ggamma,
                          Tensor<T>* gbeta) {
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  const int N = batch_of(x);
  const long long plane = static_cast<long long>(x.extent(ca + 1)) * x.extent(ca + 2);
  const long long sample = static_cast<long long>(C) * plane;
  const long long m = static_cast<long long>(N) * plane;

  if (gx) *gx = Tensor<T>(x.shape());
  if (ggamma) *ggamma = Tensor<T>(Shape{C});
  if (gbeta) *gbeta = Tensor<T>(Shape{C});

  for (int c = 0; c < C; ++c) {
    const T mu = cache.mean[c], is = cache.invstd[c], ga = gamma[c];
    T sum_gy = 0, sum_gy_xhat = 0;
    for (int n = 0; n < N; ++n) {
      const T* px = x.data() + n * sample + c * plane;
      const T* pg = gy.data() + n * sample + c * plane;
      for (long long i = 0; i < plane; ++i) {
        sum_gy += pg[i];
        sum_gy_xhat += pg[i] * (px[i] - mu) * is;
      }
    }
    if (ggamma) (*ggamma)[c] = sum_gy_xhat;
    if (gbeta) (*gbeta)[c] = sum_gy;
    if (!gx) continue;
    const T mg = sum_gy / static_cast<T>(m);
    const T mgx = sum_gy_xhat / static_cast<T>(m);
    for (int n = 0; n < N; ++n) {
      const T* px = x.data() + n * sample + c * plane;
      const T* pg = gy.data() + n * sample + c * plane;
      T* pd = gx->data() + n * sample + c * plane;
      if (training) {
        for (long long i = 0; i < plane; ++i) {
          const T xhat = (px[i] - mu) * is;
          pd[i] = ga * is * (pg[i] - mg - xhat * mgx);
        }
      } else {
        for (long long i = 0; i < plane; ++i) pd[i] = ga * is * pg[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Reductions over spatial / channel axes

/// Global average pool to (C,1,1), Eq.-style spatial mean per channel.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  const int N = batch_of(x);
  const long long plane = static_cast<long long>(x.extent(ca + 1)) * x.extent(ca + 2);
  Tensor<T> y(x.rank() == 4 ? Shape{N, C, 1, 1} : Shape{C, 1, 1});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = x.data() + (static_cast<long long>(n) * C + c) * plane;
      T sum = 0;
      for (long long i = 0; i < plane; ++i) sum += p[i];
      y[static_cast<long long>(n) * C + c] = sum / static_cast<T>(plane);
    }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& x, const Tensor<T>& gy) {
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  const int N = batch_of(x);
  const long long plane = static_cast<long long>(x.extent(ca + 1)) * x.extent(ca + 2);
  Tensor<T> gx(x.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T g = gy[static_cast<long long>(n) * C + c] / static_cast<T>(plane);
      T* p = gx.data() + (static_cast<long long>(n) * C + c) * plane;
      for (long long i = 0; i < plane; ++i) p[i] = g;
    }
  return gx;
}

/// Global max pool to (C,1,1). Ties route to the first maximal index in
/// row-major order; `argmax` (flat per n*C entry) feeds the backward pass.
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x, std::vector<long long>* argmax = nullptr) {
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  const int N = batch_of(x);
  const long long plane = static_cast<long long>(x.extent(ca + 1)) * x.extent(ca + 2);
  Tensor<T> y(x.rank() == 4 ? Shape{N, C, 1, 1} : Shape{C, 1, 1});
  if (argmax) argmax->assign(static_cast<size_t>(N) * C, 0);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = x.data() + (static_cast<long long>(n) * C + c) * plane;
      T best = p[0];
      long long bi = 0;
      for (long long i = 1; i < plane; ++i)
        if (p[i] > best) {
          best = p[i];
          bi = i;
        }
      y[static_cast<long long>(n) * C + c] = best;
      if (argmax) (*argmax)[static_cast<size_t>(n) * C + c] = bi;
    }
  return y;
}

template <typename T>
Tensor<T> global_max_pool_backward(const Tensor<T>& x, const std::vector<long long>& argmax,
                                   const Tensor<T>& gy) {
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  const int N = batch_of(x);
  const long long plane = static_cast<long long>(x.extent(ca + 1)) * x.extent(ca + 2);
  Tensor<T> gx(x.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      gx[(static_cast<long long>(n) * C + c) * plane + argmax[static_cast<size_t>(n) * C + c]] +=
          gy[static_cast<long long>(n) * C + c];
  return gx;
}

/// Per-pixel channel statistics: stacks channel-mean and channel-max into a
/// 2-channel map (the Z-pool feeding the spatial attention arms).
template <typename T>
Tensor<T> channel_pool(const Tensor<T>& x, std::vector<int>* argmax = nullptr) {
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  const int N = batch_of(x);
  const int H = x.extent(ca + 1), W = x.extent(ca + 2);
  const long long plane = static_cast<long long>(H) * W;
  Tensor<T> y(x.rank() == 4 ? Shape{N, 2, H, W} : Shape{2, H, W});
  if (argmax) argmax->assign(static_cast<size_t>(N) * plane, 0);
  for (int n = 0; n < N; ++n) {
    const T* base = x.data() + static_cast<long long>(n) * C * plane;
    T* ymean = y.data() + static_cast<long long>(n) * 2 * plane;
    T* ymax = ymean + plane;
    for (long long i = 0; i < plane; ++i) {
      T sum = 0, best = base[i];
      int bc = 0;
      for (int c = 0; c < C; ++c) {
        const T v = base[c * plane + i];
        sum += v;
        if (v > best) {
          best = v;
          bc = c;
        }
      }
      ymean[i] = sum / static_cast<T>(C);
      ymax[i] = best;
      if (argmax) (*argmax)[static_cast<size_t>(n) * plane + i] = bc;
    }
  }
  return y;
}

template <typename T>
Tensor<T> channel_pool_backward(const Tensor<T>& x, const std::vector<int>& argmax,
                                const Tensor<T>& gy) {
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  const int N = batch_of(x);
  const long long plane = static_cast<long long>(x.extent(ca + 1)) * x.extent(ca + 2);
  Tensor<T> gx(x.shape());
  for (int n = 0; n < N; ++n) {
    T* base = gx.data() + static_cast<long long>(n) * C * plane;
    const T* gmean = gy.data() + static_cast<long long>(n) * 2 * plane;
    const T* gmax = gmean + plane;
    for (long long i = 0; i < plane; ++i) {
      const T g = gmean[i] / static_cast<T>(C);
      for (int c = 0; c < C; ++c) base[c * plane + i] += g;
      base[static_cast<long long>(argmax[static_cast<size_t>(n) * plane + i]) * plane + i] +=
          gmax[i];
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Structural ops

inline std::vector<int> inverse_permutation(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

inline void validate_permutation(const std::vector<int>& perm, int rank) {
  if (static_cast<int>(perm.size()) != rank)
    throw ValidationError("permutation length does not match tensor rank");
  std::vector<bool> seen(static_cast<size_t>(rank), false);
  for (int a : perm) {
    if (a < 0 || a >= rank || seen[static_cast<size_t>(a)])
      throw ValidationError("invalid axis permutation");
    seen[static_cast<size_t>(a)] = true;
  }
}

/// Axis relabeling: output axis i takes input axis perm[i]. Bijective on
/// coordinates, so permute(permute(x, p), inverse(p)) is bit-exact identity.
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
  const int rank = x.rank();
  validate_permutation(perm, rank);
  Shape out_shape(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) out_shape[static_cast<size_t>(i)] = x.extent(perm[static_cast<size_t>(i)]);
  Tensor<T> y(out_shape);

  std::vector<long long> in_strides(static_cast<size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i)
    in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i + 1)] * x.extent(i + 1);
  // stride of the input axis that each output axis walks
  std::vector<long long> walk(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) walk[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

  std::vector<int> idx(static_cast<size_t>(rank), 0);
  long long src = 0;
  for (long long flat = 0; flat < y.numel(); ++flat) {
    y[flat] = x[src];
    for (int a = rank - 1; a >= 0; --a) {
      idx[static_cast<size_t>(a)] += 1;
      src += walk[static_cast<size_t>(a)];
      if (idx[static_cast<size_t>(a)] < out_shape[static_cast<size_t>(a)]) break;
      src -= walk[static_cast<size_t>(a)] * out_shape[static_cast<size_t>(a)];
      idx[static_cast<size_t>(a)] = 0;
    }
  }
  return y;
}

/// Expands a (C,H,W)-relative permutation to the full rank, leaving a leading
/// batch axis in place.
inline std::vector<int> expand_chw_perm(int rank, const std::vector<int>& perm3) {
  validate_permutation(perm3, 3);
  std::vector<int> full;
  const int lead = rank - 3;
  for (int i = 0; i < lead; ++i) full.push_back(i);
  for (int a : perm3) full.push_back(a + lead);
  return full;
}

/// Depth-to-space: (s^2*C, H, W) -> (C, s*H, s*W). Pure rearrangement; the
/// multiset of values is preserved and space_to_depth inverts it bit-exactly.
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int s) {
  require(s >= 1, "pixel_shuffle: factor must be >= 1");
  const int ca = channel_axis(x);
  const int C_in = x.extent(ca);
  if (C_in % (s * s) != 0)
    throw ValidationError("pixel_shuffle: channels " + std::to_string(C_in) +
                          " not divisible by s^2=" + std::to_string(s * s));
  const int C = C_in / (s * s);
  const int N = batch_of(x);
  const int H = x.extent(ca + 1), W = x.extent(ca + 2);
  Tensor<T> y(x.rank() == 4 ? Shape{N, C, H * s, W * s} : Shape{C, H * s, W * s});
  const long long in_sample = static_cast<long long>(C_in) * H * W;
  const long long out_sample = static_cast<long long>(C) * H * s * W * s;
  for (int n = 0; n < N; ++n) {
    const T* in = x.data() + n * in_sample;
    T* out = y.data() + n * out_sample;
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < H * s; ++oh)
        for (int ow = 0; ow < W * s; ++ow) {
          const int ic = c * s * s + (oh % s) * s + (ow % s);
          out[(static_cast<long long>(c) * H * s + oh) * W * s + ow] =
              in[(static_cast<long long>(ic) * H + oh / s) * W + ow / s];
        }
  }
  return y;
}

/// Exact inverse of pixel_shuffle.
template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& x, int s) {
  require(s >= 1, "space_to_depth: factor must be >= 1");
  const int ca = channel_axis(x);
  const int C = x.extent(ca);
  const int N = batch_of(x);
  const int H = x.extent(ca + 1), W = x.extent(ca + 2);
  if (H % s != 0 || W % s != 0)
    throw ValidationError("space_to_depth: spatial extents not divisible by factor");
  Tensor<T> y(x.rank() == 4 ? Shape{N, C * s * s, H / s, W / s} : Shape{C * s * s, H / s, W / s});
  const long long in_sample = static_cast<long long>(C) * H * W;
  const long long out_sample = in_sample;
  for (int n = 0; n < N; ++n) {
    const T* in = x.data() + n * in_sample;
    T* out = y.data() + n * out_sample;
    for (int c = 0; c < C; ++c)
      for (int ih = 0; ih < H; ++ih)
        for (int iw = 0; iw < W; ++iw) {
          const int oc = c * s * s + (ih % s) * s + (iw % s);
          out[(static_cast<long long>(oc) * (H / s) + ih / s) * (W / s) + iw / s] =
              in[(static_cast<long long>(c) * H + ih) * W + iw];
        }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Combination ops

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  const int rank = xs[0]->rank();
  const int ca = channel_axis(*xs[0]);
  int total_c = 0;
  for (const auto* t : xs) {
    if (t->rank() != rank) throw ValidationError("concat_channels: rank mismatch");
    for (int a = 0; a < rank; ++a)
      if (a != ca && t->extent(a) != xs[0]->extent(a))
        throw ValidationError("concat_channels: non-channel extents differ: " +
                              shape_str(t->shape()) + " vs " + shape_str(xs[0]->shape()));
    total_c += t->extent(ca);
  }
  const int N = batch_of(*xs[0]);
  const int H = xs[0]->extent(ca + 1), W = xs[0]->extent(ca + 2);
  const long long plane = static_cast<long long>(H) * W;
  Tensor<T> y(rank == 4 ? Shape{N, total_c, H, W} : Shape{total_c, H, W});
  for (int n = 0; n < N; ++n) {
    long long off = 0;
    for (const auto* t : xs) {
      const int c = t->extent(ca);
      std::copy_n(t->data() + static_cast<long long>(n) * c * plane, c * plane,
                  y.data() + (static_cast<long long>(n) * total_c) * plane + off);
      off += c * plane;
    }
  }
  return y;
}

/// Slices gy back into per-input gradients (concat backward).
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& gy, const std::vector<Shape>& shapes) {
  const int ca = channel_axis(gy);
  const int N = batch_of(gy);
  const long long plane = static_cast<long long>(gy.extent(ca + 1)) * gy.extent(ca + 2);
  const int total_c = gy.extent(ca);
  std::vector<Tensor<T>> out;
  out.reserve(shapes.size());
  long long off = 0;
  for (const auto& s : shapes) {
    Tensor<T> g(s);
    const int c = s[static_cast<size_t>(channel_axis(g))];
    for (int n = 0; n < N; ++n)
      std::copy_n(gy.data() + (static_cast<long long>(n) * total_c) * plane + off + 0, c * plane,
                  g.data() + static_cast<long long>(n) * c * plane);
    off += c * plane;
    out.push_back(std::move(g));
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw ValidationError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  Tensor<T> y(a.shape());
  for (long long i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

/// Arithmetic mean with a fixed pairwise reduction per element, so the mean
/// of four identical tensors reproduces them bit-exactly.
template <typename T>
Tensor<T> mean_of(const std::vector<const Tensor<T>*>& xs) {
  require(!xs.empty() && xs.size() <= 16, "mean_of: need 1..16 inputs");
  for (const auto* t : xs)
    if (!t->same_shape(*xs[0])) throw ValidationError("mean_of: shape mismatch");
  Tensor<T> y(xs[0]->shape());
  const size_t k = xs.size();
  const T inv = T(1) / static_cast<T>(k);
  T buf[16];
  for (long long i = 0; i < y.numel(); ++i) {
    for (size_t j = 0; j < k; ++j) buf[j] = (*xs[j])[i];
    for (size_t step = 1; step < k; step *= 2)
      for (size_t j = 0; j + step < k; j += 2 * step) buf[j] += buf[j + step];
    y[i] = buf[0] * inv;
  }
  return y;
}

namespace detail {

// Row-major walk over x paired with a broadcast view of w (each axis of w
// equals x's extent or 1). Rank is at most 4 here.
template <typename T, typename F>
void broadcast_zip(const Tensor<T>& x, const Tensor<T>& w, F&& f) {
  const int rank = x.rank();
  if (w.rank() != rank) throw ValidationError("broadcast: rank mismatch");
  int ext[4] = {1, 1, 1, 1};
  long long wstride[4] = {0, 0, 0, 0};
  if (rank > 4) throw ValidationError("broadcast: rank > 4 unsupported");
  long long ws = 1;
  long long natural[4];
  for (int a = rank - 1; a >= 0; --a) {
    natural[a] = ws;
    ws *= w.extent(a);
  }
  for (int a = 0; a < rank; ++a) {
    ext[4 - rank + a] = x.extent(a);
    if (w.extent(a) == x.extent(a))
      wstride[4 - rank + a] = natural[a];
    else if (w.extent(a) == 1)
      wstride[4 - rank + a] = 0;
    else
      throw ValidationError("broadcast: extent " + std::to_string(w.extent(a)) +
                            " incompatible with " + std::to_string(x.extent(a)));
  }
  long long xi = 0;
  for (int i0 = 0; i0 < ext[0]; ++i0)
    for (int i1 = 0; i1 < ext[1]; ++i1)
      for (int i2 = 0; i2 < ext[2]; ++i2) {
        long long wi = i0 * wstride[0] + i1 * wstride[1] + i2 * wstride[2];
        for (int i3 = 0; i3 < ext[3]; ++i3, ++xi, wi += wstride[3]) f(xi, wi);
      }
}

}  // namespace detail

/// Multiplies x elementwise by attention weights of shape (C,1,1) or (1,H,W)
/// (any axis of w may be 1 and broadcasts).
template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& w) {
  Tensor<T> y(x.shape());
  detail::broadcast_zip(x, w, [&](long long xi, long long wi) { y[xi] = x[xi] * w[wi]; });
  return y;
}

template <typename T>
void mul_broadcast_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                            Tensor<T>* gx, Tensor<T>* gw) {
  if (gx) {
    *gx = Tensor<T>(x.shape());
    detail::broadcast_zip(x, w, [&](long long xi, long long wi) { (*gx)[xi] = gy[xi] * w[wi]; });
  }
  if (gw) {
    *gw = Tensor<T>(w.shape());
    detail::broadcast_zip(x, w, [&](long long xi, long long wi) { (*gw)[wi] += gy[xi] * x[xi]; });
  }
}

// ---------------------------------------------------------------------------
// Loss

/// Mean absolute deviation over all elements and batch items.
template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!pred.same_shape(target))
    throw ValidationError("l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                          shape_str(target.shape()));
  T sum = 0;
  for (long long i = 0; i < pred.numel(); ++i) sum += std::abs(pred[i] - target[i]);
  return sum / static_cast<T>(pred.numel());
}

/// Subgradient at zero residual is 0; elsewhere +/- gy / count.
template <typename T>
Tensor<T> l1_loss_backward(const Tensor<T>& pred, const Tensor<T>& target, T gy) {
  Tensor<T> g(pred.shape());
  const T scale = gy / static_cast<T>(pred.numel());
  for (long long i = 0; i < pred.numel(); ++i) {
    const T d = pred[i] - target[i];
    g[i] = d > T(0) ? scale : (d < T(0) ? -scale : T(0));
  }
  return g;
}

}  // namespace pdan
