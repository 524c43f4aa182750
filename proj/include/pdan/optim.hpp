#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pdan/common.hpp"
#include "pdan/config.hpp"
#include "pdan/tensor.hpp"

namespace pdan {

/// Training recipe: 16 LR patches of 48x48 per batch, Adam with
/// beta1=0.9/beta2=0.999/eps=1e-8, learning rate 1e-4 halved every 200
/// epochs. steps_per_epoch is a free choice (default 1000 batches).
struct TrainConfig {
  int batch_size = 16;
  int patch = 48;
  double lr0 = 1e-4;
  int halve_every = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 1;
  int steps_per_epoch = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    require(batch_size > 0 && patch > 0 && epochs > 0 && steps_per_epoch > 0 && halve_every > 0,
            "train config fields must be positive");
    require(lr0 > 0 && epsilon > 0, "lr0 and epsilon must be positive");
    require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1, "betas must lie in (0,1)");
  }

  bool apply_key(const std::string& key, const std::string& value) {
    if (key == "train.batch_size") batch_size = detail::parse_int(key, value);
    else if (key == "train.patch") patch = detail::parse_int(key, value);
    else if (key == "train.lr0") lr0 = detail::parse_double(key, value);
    else if (key == "train.halve_every") halve_every = detail::parse_int(key, value);
    else if (key == "train.beta1") beta1 = detail::parse_double(key, value);
    else if (key == "train.beta2") beta2 = detail::parse_double(key, value);
    else if (key == "train.epsilon") epsilon = detail::parse_double(key, value);
    else if (key == "train.epochs") epochs = detail::parse_int(key, value);
    else if (key == "train.steps_per_epoch") steps_per_epoch = detail::parse_int(key, value);
    else if (key == "train.seed") seed = detail::parse_u64(key, value);
    else return false;
    return true;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "train.batch_size = " << batch_size << "\n"
       << "train.patch = " << patch << "\n"
       << "train.lr0 = " << detail::fmt_double(lr0) << "\n"
       << "train.halve_every = " << halve_every << "\n"
       << "train.beta1 = " << detail::fmt_double(beta1) << "\n"
       << "train.beta2 = " << detail::fmt_double(beta2) << "\n"
       << "train.epsilon = " << detail::fmt_double(epsilon) << "\n"
       << "train.epochs = " << epochs << "\n"
       << "train.steps_per_epoch = " << steps_per_epoch << "\n"
       << "train.seed = " << seed << "\n";
    return os.str();
  }

  bool operator==(const TrainConfig&) const = default;
};

/// lr0 * 0.5^floor(epoch / halve_every)
inline double lr_at(int epoch, const TrainConfig& cfg) {
  require(epoch >= 0, "epoch must be non-negative");
  return cfg.lr0 * std::pow(0.5, epoch / cfg.halve_every);
}

/// Per-parameter first/second moments and the shared step counter.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  long long t = 0;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>>& params) {
  AdamState<T> s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

/// Standard bias-corrected Adam update, applied in a fixed order.
/// A non-finite gradient aborts the whole step with diagnostics before any
/// parameter changes.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, double lr, double beta1, double beta2, double epsilon,
               const std::vector<std::string>* names = nullptr) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          "adam_step: parameter/gradient/state counts differ");
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(params[i]))
      throw ValidationError("adam_step: gradient shape mismatch at parameter " +
                            std::to_string(i));
    for (long long k = 0; k < grads[i].numel(); ++k)
      if (!std::isfinite(static_cast<double>(grads[i][k])))
        throw NumericError("adam_step: non-finite gradient in '" +
                           (names ? (*names)[i] : std::to_string(i)) + "' at flat index " +
                           std::to_string(k) + "; step aborted");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = params[i];
    const Tensor<T>& g = grads[i];
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    for (long long k = 0; k < p.numel(); ++k) {
      m[k] = static_cast<T>(beta1 * m[k] + (1.0 - beta1) * g[k]);
      v[k] = static_cast<T>(beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]);
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] = static_cast<T>(p[k] - lr * mhat / (std::sqrt(vhat) + epsilon));
    }
  }
}

}  // namespace pdan
