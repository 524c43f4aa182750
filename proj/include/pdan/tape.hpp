#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pdan/common.hpp"
#include "pdan/conv.hpp"
#include "pdan/ops.hpp"
#include "pdan/tensor.hpp"

namespace pdan {

/// Reverse-mode tape. Every op appends a record holding the operation
/// identity, the ids of the inputs it needs, and a backward closure; replaying
/// the records in reverse order accumulates a gradient for every node
/// reachable from the loss that requires one. Gradient accumulation runs in a
/// fixed serial order, so results are bit-reproducible.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int leaf(Tensor<T> value, bool requires_grad = false) {
    return push("leaf", std::move(value), requires_grad);
  }

  const Tensor<T>& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }

  /// Accumulated gradient; zeros if the node was never reached.
  const Tensor<T>& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  size_t num_records() const { return records_.size(); }

  void backward(int loss_id) {
    Node& loss = nodes_[static_cast<size_t>(loss_id)];
    if (loss.value.numel() != 1)
      throw ValidationError("backward: loss must be scalar, got " +
                            shape_str(loss.value.shape()));
    loss.grad = Tensor<T>(loss.value.shape(), T(1));
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (nodes_[static_cast<size_t>(it->output)].grad.empty()) continue;
      it->backward();
    }
  }

  // -- ops -----------------------------------------------------------------

  int conv2d(int x, const ConvSpec& spec, int w, int b) {
    Tensor<T> y = pdan::conv2d(val(x), spec, val(w), b >= 0 ? val(b) : Tensor<T>{});
    const int out = push("conv2d", std::move(y), any_grad({x, w, b}));
    record(out, [this, x, w, b, spec, out] {
      Tensor<T> gx, gw, gb;
      pdan::conv2d_backward(val(x), spec, val(w), grad_of(out),
                            requires_grad(x) ? &gx : nullptr, requires_grad(w) ? &gw : nullptr,
                            (b >= 0 && requires_grad(b)) ? &gb : nullptr);
      if (requires_grad(x)) accumulate(x, std::move(gx));
      if (requires_grad(w)) accumulate(w, std::move(gw));
      if (b >= 0 && requires_grad(b)) accumulate(b, std::move(gb));
    });
    return out;
  }

  int relu(int x) {
    const int out = push("relu", pdan::relu(val(x)), requires_grad(x));
    record(out, [this, x, out] {
      if (requires_grad(x)) accumulate(x, relu_backward(val(x), grad_of(out)));
    });
    return out;
  }

  int sigmoid(int x) {
    const int out = push("sigmoid", pdan::sigmoid(val(x)), requires_grad(x));
    record(out, [this, x, out] {
      if (requires_grad(x)) accumulate(x, sigmoid_backward(val(out), grad_of(out)));
    });
    return out;
  }

  int batchnorm(int x, int gamma, int beta, BnBuffers<T>* buffers, bool training) {
    auto cache = std::make_shared<BnCache<T>>();
    Tensor<T> y = batchnorm2d(val(x), val(gamma), val(beta), *buffers, training, cache.get());
    const int out = push("batchnorm2d", std::move(y), any_grad({x, gamma, beta}));
    record(out, [this, x, gamma, beta, cache, training, out] {
      Tensor<T> gx, gg, gb;
      batchnorm2d_backward(val(x), val(gamma), *cache, training, grad_of(out),
                           requires_grad(x) ? &gx : nullptr,
                           requires_grad(gamma) ? &gg : nullptr,
                           requires_grad(beta) ? &gb : nullptr);
      if (requires_grad(x)) accumulate(x, std::move(gx));
      if (requires_grad(gamma)) accumulate(gamma, std::move(gg));
      if (requires_grad(beta)) accumulate(beta, std::move(gb));
    });
    return out;
  }

  int gap(int x) {
    const int out = push("gap", global_avg_pool(val(x)), requires_grad(x));
    record(out, [this, x, out] {
      if (requires_grad(x)) accumulate(x, global_avg_pool_backward(val(x), grad_of(out)));
    });
    return out;
  }

  int gmp(int x) {
    auto argmax = std::make_shared<std::vector<long long>>();
    const int out = push("gmp", global_max_pool(val(x), argmax.get()), requires_grad(x));
    record(out, [this, x, argmax, out] {
      if (requires_grad(x)) accumulate(x, global_max_pool_backward(val(x), *argmax, grad_of(out)));
    });
    return out;
  }

  int channel_pool(int x) {
    auto argmax = std::make_shared<std::vector<int>>();
    const int out = push("channel_pool", pdan::channel_pool(val(x), argmax.get()), requires_grad(x));
    record(out, [this, x, argmax, out] {
      if (requires_grad(x)) accumulate(x, channel_pool_backward(val(x), *argmax, grad_of(out)));
    });
    return out;
  }

  int permute(int x, std::vector<int> perm) {
    const int out = push("permute", pdan::permute(val(x), perm), requires_grad(x));
    record(out, [this, x, perm = std::move(perm), out] {
      if (requires_grad(x)) accumulate(x, pdan::permute(grad_of(out), inverse_permutation(perm)));
    });
    return out;
  }

  int pixel_shuffle(int x, int s) {
    const int out = push("pixel_shuffle", pdan::pixel_shuffle(val(x), s), requires_grad(x));
    record(out, [this, x, s, out] {
      if (requires_grad(x)) accumulate(x, space_to_depth(grad_of(out), s));
    });
    return out;
  }

  int concat(const std::vector<int>& xs) {
    std::vector<const Tensor<T>*> vs;
    bool rg = false;
    std::vector<Shape> shapes;
    for (int id : xs) {
      vs.push_back(&val(id));
      shapes.push_back(val(id).shape());
      rg = rg || requires_grad(id);
    }
    const int out = push("concat", concat_channels(vs), rg);
    record(out, [this, xs, shapes = std::move(shapes), out] {
      auto parts = split_channels(grad_of(out), shapes);
      for (size_t i = 0; i < xs.size(); ++i)
        if (requires_grad(xs[i])) accumulate(xs[i], std::move(parts[i]));
    });
    return out;
  }

  int add(int a, int b) {
    const int out = push("add", pdan::add(val(a), val(b)), any_grad({a, b}));
    record(out, [this, a, b, out] {
      if (requires_grad(a)) accumulate(a, Tensor<T>(grad_of(out)));
      if (requires_grad(b)) accumulate(b, Tensor<T>(grad_of(out)));
    });
    return out;
  }

  int mul_broadcast(int x, int w) {
    const int out = push("mul_broadcast", pdan::mul_broadcast(val(x), val(w)), any_grad({x, w}));
    record(out, [this, x, w, out] {
      Tensor<T> gx, gw;
      mul_broadcast_backward(val(x), val(w), grad_of(out), requires_grad(x) ? &gx : nullptr,
                             requires_grad(w) ? &gw : nullptr);
      if (requires_grad(x)) accumulate(x, std::move(gx));
      if (requires_grad(w)) accumulate(w, std::move(gw));
    });
    return out;
  }

  int mean_of(const std::vector<int>& xs) {
    std::vector<const Tensor<T>*> vs;
    bool rg = false;
    for (int id : xs) {
      vs.push_back(&val(id));
      rg = rg || requires_grad(id);
    }
    const int out = push("mean", pdan::mean_of(vs), rg);
    record(out, [this, xs, out] {
      const T inv = T(1) / static_cast<T>(xs.size());
      const Tensor<T>& g = grad_of(out);
      Tensor<T> part(g.shape());
      for (long long i = 0; i < g.numel(); ++i) part[i] = g[i] * inv;
      for (int id : xs)
        if (requires_grad(id)) accumulate(id, Tensor<T>(part));
    });
    return out;
  }

  int l1_loss(int pred, int target) {
    const T v = pdan::l1_loss(val(pred), val(target));
    const int out = push("l1_loss", Tensor<T>(Shape{1}, v), any_grad({pred, target}));
    record(out, [this, pred, target, out] {
      const T gy = grad_of(out)[0];
      if (requires_grad(pred)) accumulate(pred, l1_loss_backward(val(pred), val(target), gy));
      if (requires_grad(target)) accumulate(target, l1_loss_backward(val(target), val(pred), gy));
    });
    return out;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
  };
  struct Record {
    int output;
    std::function<void()> backward;
  };

  int push(const char* op, Tensor<T> value, bool requires_grad) {
    value.check_finite(op);
    nodes_.push_back(Node{std::move(value), {}, requires_grad});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void record(int out, std::function<void()> fn) {
    records_.push_back(Record{out, std::move(fn)});
  }

  bool any_grad(std::initializer_list<int> ids) const {
    for (int id : ids)
      if (id >= 0 && requires_grad(id)) return true;
    return false;
  }

  const Tensor<T>& grad_of(int id) { return grad(id); }

  void accumulate(int id, Tensor<T> g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) {
      n.grad = std::move(g);
    } else {
      for (long long i = 0; i < n.grad.numel(); ++i) n.grad[i] += g[i];
    }
  }

  std::vector<Node> nodes_;
  std::vector<Record> records_;
};

}  // namespace pdan
