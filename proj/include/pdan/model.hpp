#pragma once

#include <string>
#include <vector>

#include "pdan/graph.hpp"
#include "pdan/ops.hpp"
#include "pdan/rng.hpp"
#include "pdan/tape.hpp"

namespace pdan {

enum class RunMode { kTrain, kInfer };

/// An instantiated network: the layer graph plus its named, ordered parameter
/// tensors and batch-norm buffers. Parameters are read-only during
/// forward/backward and mutated only by the optimizer between steps.
template <typename T>
struct Model {
  ModelGraph graph;
  std::vector<Tensor<T>> params;          // aligned with graph.params
  std::vector<BnBuffers<T>> bn_buffers;   // aligned with graph.bns

  const Tensor<T>& param(const std::string& name) const {
    for (size_t i = 0; i < graph.params.size(); ++i)
      if (graph.params[i].name == name) return params[i];
    throw ValidationError("no parameter named '" + name + "'");
  }

  Tensor<T>& param(const std::string& name) {
    for (size_t i = 0; i < graph.params.size(); ++i)
      if (graph.params[i].name == name) return params[i];
    throw ValidationError("no parameter named '" + name + "'");
  }

  long long parameter_count() const {
    long long n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
  }
};

/// Allocates parameters per their declared init (zeros, BN gamma at one);
/// conv weights stay zero until init_weights seeds them.
template <typename T>
Model<T> instantiate(ModelGraph graph) {
  Model<T> m;
  m.params.reserve(graph.params.size());
  for (const auto& def : graph.params)
    m.params.push_back(Tensor<T>(def.shape, def.init == ParamInit::kOne ? T(1) : T(0)));
  m.bn_buffers.reserve(graph.bns.size());
  for (const auto& bn : graph.bns)
    m.bn_buffers.push_back(BnBuffers<T>(bn.channels, static_cast<T>(graph.config.bn_momentum),
                                        static_cast<T>(graph.config.bn_epsilon)));
  m.graph = std::move(graph);
  return m;
}

/// Fan-in-scaled normal init for conv weights, zero biases, BN gamma=1
/// beta=0; reproducible from the seed (draws consume the parameter list in
/// graph order).
template <typename T>
void init_weights(Model<T>& m, std::uint64_t seed) {
  Rng rng(seed);
  for (size_t i = 0; i < m.graph.params.size(); ++i) {
    const ParamDef& def = m.graph.params[i];
    Tensor<T>& p = m.params[i];
    switch (def.init) {
      case ParamInit::kConvWeight: {
        const double stddev = std::sqrt(2.0 / static_cast<double>(def.fan_in));
        for (long long k = 0; k < p.numel(); ++k) p[k] = static_cast<T>(rng.normal() * stddev);
        break;
      }
      case ParamInit::kZero:
        p.fill(T(0));
        break;
      case ParamInit::kOne:
        p.fill(T(1));
        break;
    }
  }
  for (auto& bn : m.bn_buffers) {
    bn.running_mean.fill(T(0));
    bn.running_var.fill(T(1));
    bn.update_count = 0;
  }
}

template <typename U, typename T>
Model<U> model_cast(const Model<T>& m) {
  Model<U> out;
  out.graph = m.graph;
  out.params.reserve(m.params.size());
  for (const auto& p : m.params) out.params.push_back(p.template cast<U>());
  out.bn_buffers.reserve(m.bn_buffers.size());
  for (const auto& bn : m.bn_buffers) {
    BnBuffers<U> b;
    b.running_mean = bn.running_mean.template cast<U>();
    b.running_var = bn.running_var.template cast<U>();
    b.momentum = static_cast<U>(bn.momentum);
    b.epsilon = static_cast<U>(bn.epsilon);
    b.update_count = bn.update_count;
    out.bn_buffers.push_back(std::move(b));
  }
  return out;
}

/// Direct (untaped) evaluation. Intermediate activations are freed as soon as
/// their last consumer has run, so whole-image inference stays lean; passing
/// `collect` keeps every node value instead (tests, debugging).
template <typename T>
Tensor<T> forward(Model<T>& m, const Tensor<T>& input, RunMode mode = RunMode::kInfer,
                  std::vector<Tensor<T>>* collect = nullptr) {
  const ModelGraph& g = m.graph;
  std::vector<int> uses(g.nodes.size(), 0);
  for (const auto& n : g.nodes)
    for (int a : n.args) ++uses[static_cast<size_t>(a)];
  ++uses[static_cast<size_t>(g.output)];

  const bool training = mode == RunMode::kTrain;
  std::vector<Tensor<T>> vals(g.nodes.size());
  auto empty_bias = Tensor<T>{};
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const GraphNode& n = g.nodes[i];
    auto arg = [&](size_t k) -> const Tensor<T>& { return vals[static_cast<size_t>(n.args[k])]; };
    switch (n.kind) {
      case OpKind::kInput:
        vals[i] = input;
        break;
      case OpKind::kConv:
        vals[i] = conv2d(arg(0), n.conv, m.params[static_cast<size_t>(n.weight)],
                         n.bias >= 0 ? m.params[static_cast<size_t>(n.bias)] : empty_bias);
        break;
      case OpKind::kRelu:
        vals[i] = relu(arg(0));
        break;
      case OpKind::kSigmoid:
        vals[i] = sigmoid(arg(0));
        break;
      case OpKind::kBatchNorm:
        vals[i] = batchnorm2d(arg(0), m.params[static_cast<size_t>(n.bn_gamma)],
                              m.params[static_cast<size_t>(n.bn_beta)],
                              m.bn_buffers[static_cast<size_t>(n.bn)], training);
        break;
      case OpKind::kGap:
        vals[i] = global_avg_pool(arg(0));
        break;
      case OpKind::kGmp:
        vals[i] = global_max_pool(arg(0));
        break;
      case OpKind::kChannelPool:
        vals[i] = channel_pool(arg(0));
        break;
      case OpKind::kPermute:
        vals[i] = permute(arg(0), expand_chw_perm(arg(0).rank(), n.perm3));
        break;
      case OpKind::kPixelShuffle:
        vals[i] = pixel_shuffle(arg(0), n.factor);
        break;
      case OpKind::kConcat: {
        std::vector<const Tensor<T>*> xs;
        for (int a : n.args) xs.push_back(&vals[static_cast<size_t>(a)]);
        vals[i] = concat_channels(xs);
        break;
      }
      case OpKind::kAdd:
        vals[i] = add(arg(0), arg(1));
        break;
      case OpKind::kMulBroadcast:
        vals[i] = mul_broadcast(arg(0), arg(1));
        break;
      case OpKind::kMean: {
        std::vector<const Tensor<T>*> xs;
        for (int a : n.args) xs.push_back(&vals[static_cast<size_t>(a)]);
        vals[i] = mean_of(xs);
        break;
      }
    }
    try {
      vals[i].check_finite(n.name.c_str());
    } catch (const NumericError&) {
      throw NumericError("forward: first non-finite activation at node '" + n.name + "'");
    }
    if (!collect)
      for (int a : n.args)
        if (--uses[static_cast<size_t>(a)] == 0) vals[static_cast<size_t>(a)] = Tensor<T>{};
  }
  Tensor<T> out = vals[static_cast<size_t>(g.output)];
  if (collect) *collect = std::move(vals);
  return out;
}

/// Tape evaluation for training/grad-check. Parameters become tape leaves
/// with gradients enabled; `param_ids` receives their tape ids aligned with
/// m.params.
template <typename T>
int forward_on_tape(Model<T>& m, Tape<T>& tape, int input_id, RunMode mode,
                    std::vector<int>* param_ids_out = nullptr) {
  const ModelGraph& g = m.graph;
  const bool training = mode == RunMode::kTrain;
  std::vector<int> param_ids(g.params.size());
  for (size_t i = 0; i < g.params.size(); ++i)
    param_ids[i] = tape.leaf(m.params[i], /*requires_grad=*/true);
  std::vector<int> ids(g.nodes.size(), -1);
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const GraphNode& n = g.nodes[i];
    auto arg = [&](size_t k) { return ids[static_cast<size_t>(n.args[k])]; };
    switch (n.kind) {
      case OpKind::kInput:
        ids[i] = input_id;
        break;
      case OpKind::kConv:
        ids[i] = tape.conv2d(arg(0), n.conv, param_ids[static_cast<size_t>(n.weight)],
                             n.bias >= 0 ? param_ids[static_cast<size_t>(n.bias)] : -1);
        break;
      case OpKind::kRelu:
        ids[i] = tape.relu(arg(0));
        break;
      case OpKind::kSigmoid:
        ids[i] = tape.sigmoid(arg(0));
        break;
      case OpKind::kBatchNorm:
        ids[i] = tape.batchnorm(arg(0), param_ids[static_cast<size_t>(n.bn_gamma)],
                                param_ids[static_cast<size_t>(n.bn_beta)],
                                &m.bn_buffers[static_cast<size_t>(n.bn)], training);
        break;
      case OpKind::kGap:
        ids[i] = tape.gap(arg(0));
        break;
      case OpKind::kGmp:
        ids[i] = tape.gmp(arg(0));
        break;
      case OpKind::kChannelPool:
        ids[i] = tape.channel_pool(arg(0));
        break;
      case OpKind::kPermute:
        ids[i] = tape.permute(arg(0), expand_chw_perm(tape.val(arg(0)).rank(), n.perm3));
        break;
      case OpKind::kPixelShuffle:
        ids[i] = tape.pixel_shuffle(arg(0), n.factor);
        break;
      case OpKind::kConcat: {
        std::vector<int> xs;
        for (int a : n.args) xs.push_back(ids[static_cast<size_t>(a)]);
        ids[i] = tape.concat(xs);
        break;
      }
      case OpKind::kAdd:
        ids[i] = tape.add(arg(0), arg(1));
        break;
      case OpKind::kMulBroadcast:
        ids[i] = tape.mul_broadcast(arg(0), arg(1));
        break;
      case OpKind::kMean: {
        std::vector<int> xs;
        for (int a : n.args) xs.push_back(ids[static_cast<size_t>(a)]);
        ids[i] = tape.mean_of(xs);
        break;
      }
    }
  }
  if (param_ids_out) *param_ids_out = std::move(param_ids);
  return ids[static_cast<size_t>(g.output)];
}

}  // namespace pdan
