#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "pdan/common.hpp"
#include "pdan/config.hpp"
#include "pdan/conv.hpp"
#include "pdan/tensor.hpp"

namespace pdan {

enum class OpKind {
  kInput,
  kConv,
  kRelu,
  kSigmoid,
  kBatchNorm,
  kGap,
  kGmp,
  kChannelPool,
  kPermute,
  kPixelShuffle,
  kConcat,
  kAdd,
  kMulBroadcast,
  kMean,
};

enum class ParamInit { kConvWeight, kZero, kOne };

struct ParamDef {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::kZero;
  int fan_in = 0;  // kConvWeight only
};

struct BnDef {
  std::string name;
  int channels = 0;
};

struct GraphNode {
  OpKind kind = OpKind::kInput;
  std::string name;
  std::vector<int> args;
  ConvSpec conv{};
  int weight = -1;            // ParamDef index (kConv)
  int bias = -1;              // ParamDef index or -1 (kConv)
  bool owns_params = true;    // false when reusing another node's weights
  int bn = -1;                // BnDef index (kBatchNorm); gamma/beta params follow
  int bn_gamma = -1, bn_beta = -1;
  std::vector<int> perm3;     // (C,H,W)-relative permutation (kPermute)
  int factor = 1;             // kPixelShuffle
};

/// The instantiable layer graph: an ordered node list in evaluation order
/// (acyclic by construction — nodes only reference earlier ids), the named
/// parameter definitions in graph order, and the batch-norm state slots.
struct ModelGraph {
  NetworkConfig config;
  std::vector<GraphNode> nodes;
  int input = -1;
  int output = -1;
  std::vector<ParamDef> params;
  std::vector<BnDef> bns;
};

namespace detail {

class GraphBuilder {
 public:
  int input(const std::string& name) {
    GraphNode n;
    n.kind = OpKind::kInput;
    n.name = name;
    return push(std::move(n));
  }

  int conv(const std::string& name, int x, const ConvSpec& spec, bool with_bias) {
    spec.validate();
    GraphNode n;
    n.kind = OpKind::kConv;
    n.name = name;
    n.args = {x};
    n.conv = spec;
    n.weight = add_param(name + ".w", spec.weight_shape(), ParamInit::kConvWeight,
                         (spec.in_channels / spec.groups) * spec.kernel * spec.kernel);
    if (with_bias) n.bias = add_param(name + ".b", Shape{spec.out_channels}, ParamInit::kZero, 0);
    return push(std::move(n));
  }

  /// Conv reusing another conv node's parameters (shared MLP in CBAM).
  int conv_shared(const std::string& name, int x, const ConvSpec& spec, int weight, int bias) {
    spec.validate();
    GraphNode n;
    n.kind = OpKind::kConv;
    n.name = name;
    n.args = {x};
    n.conv = spec;
    n.weight = weight;
    n.bias = bias;
    n.owns_params = false;
    return push(std::move(n));
  }

  int batchnorm(const std::string& name, int x, int channels) {
    GraphNode n;
    n.kind = OpKind::kBatchNorm;
    n.name = name;
    n.args = {x};
    n.bn = static_cast<int>(g_.bns.size());
    g_.bns.push_back(BnDef{name, channels});
    n.bn_gamma = add_param(name + ".gamma", Shape{channels}, ParamInit::kOne, 0);
    n.bn_beta = add_param(name + ".beta", Shape{channels}, ParamInit::kZero, 0);
    return push(std::move(n));
  }

  int unary(OpKind kind, const std::string& name, int x) {
    GraphNode n;
    n.kind = kind;
    n.name = name;
    n.args = {x};
    return push(std::move(n));
  }

  int permute(const std::string& name, int x, std::vector<int> perm3) {
    GraphNode n;
    n.kind = OpKind::kPermute;
    n.name = name;
    n.args = {x};
    n.perm3 = std::move(perm3);
    return push(std::move(n));
  }

  int pixel_shuffle(const std::string& name, int x, int factor) {
    GraphNode n;
    n.kind = OpKind::kPixelShuffle;
    n.name = name;
    n.args = {x};
    n.factor = factor;
    return push(std::move(n));
  }

  int nary(OpKind kind, const std::string& name, std::vector<int> args) {
    GraphNode n;
    n.kind = kind;
    n.name = name;
    n.args = std::move(args);
    return push(std::move(n));
  }

  const GraphNode& node(int id) const { return g_.nodes[static_cast<size_t>(id)]; }

  ModelGraph finish(NetworkConfig cfg, int input, int output) {
    g_.config = std::move(cfg);
    g_.input = input;
    g_.output = output;
    return std::move(g_);
  }

 private:
  int push(GraphNode n) {
    for (int a : n.args)
      require(a >= 0 && a < static_cast<int>(g_.nodes.size()), "graph wiring error");
    g_.nodes.push_back(std::move(n));
    return static_cast<int>(g_.nodes.size()) - 1;
  }

  int add_param(std::string name, Shape shape, ParamInit init, int fan_in) {
    g_.params.push_back(ParamDef{std::move(name), std::move(shape), init, fan_in});
    return static_cast<int>(g_.params.size()) - 1;
  }

  ModelGraph g_;
};

// Channel-attention arm: gap -> 1x1 (C -> C/r, no bias) -> relu -> 1x1
// (C/r -> C, no bias) -> sigmoid -> scale. This is both the SE variant and
// branch 1 of joint attention.
inline int se_gate(GraphBuilder& b, int x, int width, int r, const std::string& prefix) {
  const int squeezed = width / r;
  int a = b.unary(OpKind::kGap, prefix + ".gap", x);
  a = b.conv(prefix + ".fc1", a, ConvSpec{width, squeezed, 1, 1, 1, 0}, /*with_bias=*/false);
  a = b.unary(OpKind::kRelu, prefix + ".relu", a);
  a = b.conv(prefix + ".fc2", a, ConvSpec{squeezed, width, 1, 1, 1, 0}, /*with_bias=*/false);
  a = b.unary(OpKind::kSigmoid, prefix + ".sigmoid", a);
  return b.nary(OpKind::kMulBroadcast, prefix + ".scale", {x, a});
}

// Spatial-attention arm: channel pool -> kxk conv (2 -> 1, bias-free,
// dilation d) -> batchnorm -> sigmoid -> scale.
inline int spatial_gate(GraphBuilder& b, int x, int kernel, int dilation,
                        const std::string& prefix) {
  int a = b.unary(OpKind::kChannelPool, prefix + ".pool", x);
  a = b.conv(prefix + ".conv", a, ConvSpec::same(2, 1, kernel, 1, dilation), /*with_bias=*/false);
  a = b.batchnorm(prefix + ".bn", a, 1);
  a = b.unary(OpKind::kSigmoid, prefix + ".sigmoid", a);
  return b.nary(OpKind::kMulBroadcast, prefix + ".scale", {x, a});
}

// Four-branch joint attention: channel arm, spatial arm, and two
// cross-dimension arms that swap the channel axis with H (resp. W), apply the
// spatial recipe in the permuted frame, and permute back; outputs averaged.
inline int joint_attention(GraphBuilder& b, int x, int width, int r, const std::string& prefix) {
  const int ch = se_gate(b, x, width, r, prefix + ".ch");
  const int sp = spatial_gate(b, x, 3, 3, prefix + ".sp");
  const std::vector<int> swap_ch = {1, 0, 2};  // (C,H,W) -> (H,C,W)
  const std::vector<int> swap_cw = {2, 1, 0};  // (C,H,W) -> (W,H,C)
  int h = b.permute(prefix + ".hc.permute", x, swap_ch);
  h = spatial_gate(b, h, 3, 3, prefix + ".hc");
  h = b.permute(prefix + ".hc.restore", h, swap_ch);
  int w = b.permute(prefix + ".cw.permute", x, swap_cw);
  w = spatial_gate(b, w, 3, 3, prefix + ".cw");
  w = b.permute(prefix + ".cw.restore", w, swap_cw);
  return b.nary(OpKind::kMean, prefix + ".mean", {ch, sp, h, w});
}

// CBAM variant: shared-MLP channel attention over gap+gmp, then a 7x7
// spatial gate, applied sequentially.
inline int cbam_attention(GraphBuilder& b, int x, int width, int r, const std::string& prefix) {
  const int squeezed = width / r;
  const ConvSpec fc1{width, squeezed, 1, 1, 1, 0};
  const ConvSpec fc2{squeezed, width, 1, 1, 1, 0};
  int ga = b.unary(OpKind::kGap, prefix + ".ch.gap", x);
  ga = b.conv(prefix + ".ch.fc1", ga, fc1, /*with_bias=*/false);
  const int fc1_node = ga;
  ga = b.unary(OpKind::kRelu, prefix + ".ch.relu_a", ga);
  ga = b.conv(prefix + ".ch.fc2", ga, fc2, /*with_bias=*/false);
  const int fc2_node = ga;
  int gm = b.unary(OpKind::kGmp, prefix + ".ch.gmp", x);
  gm = b.conv_shared(prefix + ".ch.fc1_max", gm, fc1, b.node(fc1_node).weight, -1);
  gm = b.unary(OpKind::kRelu, prefix + ".ch.relu_m", gm);
  gm = b.conv_shared(prefix + ".ch.fc2_max", gm, fc2, b.node(fc2_node).weight, -1);
  int a = b.nary(OpKind::kAdd, prefix + ".ch.add", {ga, gm});
  a = b.unary(OpKind::kSigmoid, prefix + ".ch.sigmoid", a);
  const int refined = b.nary(OpKind::kMulBroadcast, prefix + ".ch.scale", {x, a});
  return spatial_gate(b, refined, 7, 1, prefix + ".sp");
}

inline int attention_module(GraphBuilder& b, int x, Attention kind, int width, int r,
                            const std::string& prefix) {
  switch (kind) {
    case Attention::kNone: return x;
    case Attention::kSe: return se_gate(b, x, width, r, prefix + ".se");
    case Attention::kCbam: return cbam_attention(b, x, width, r, prefix + ".cbam");
    case Attention::kJoint: return joint_attention(b, x, width, r, prefix + ".ja");
  }
  throw ValidationError("unreachable attention kind");
}

// One pyramidal dense attention block: 1x1 reduce (trunk -> c0), L dense
// layers of [concat -> 1x1 bottleneck -> relu -> 3x3 group conv -> relu],
// concat of everything, attention on that width, 1x1 fusion back to the
// trunk, and the local residual add.
inline int build_pdab(GraphBuilder& b, int block_input, const NetworkConfig& cfg,
                      const std::string& prefix) {
  const GrowthSchedule& growth = cfg.growth;
  const auto layer_specs = growth.table();
  int reduced = b.conv(prefix + ".reduce", block_input,
                       ConvSpec{cfg.trunk_channels, growth.c0, 1, 1, 1, 0}, /*with_bias=*/true);
  std::vector<int> feats = {reduced};
  for (const auto& layer : layer_specs) {
    const std::string lp = prefix + ".dense" + std::to_string(layer.index);
    const int cat = feats.size() == 1 ? feats[0] : b.nary(OpKind::kConcat, lp + ".concat", feats);
    int a = b.conv(lp + ".bottleneck", cat,
                   ConvSpec{layer.in_channels, layer.out_channels, 1, 1, 1, 0}, /*with_bias=*/true);
    a = b.unary(OpKind::kRelu, lp + ".relu1", a);
    a = b.conv(lp + ".group", a,
               ConvSpec::same(layer.out_channels, layer.out_channels, 3, layer.groups, 1),
               /*with_bias=*/true);
    a = b.unary(OpKind::kRelu, lp + ".relu2", a);
    feats.push_back(a);
  }
  const int cat = b.nary(OpKind::kConcat, prefix + ".concat", feats);
  const int attended = attention_module(b, cat, cfg.attention, growth.concat_width(),
                                        cfg.reduction_ratio, prefix);
  const int fused = b.conv(prefix + ".fuse", attended,
                           ConvSpec{growth.concat_width(), cfg.trunk_channels, 1, 1, 1, 0},
                           /*with_bias=*/true);
  return b.nary(OpKind::kAdd, prefix + ".residual", {block_input, fused});
}

}  // namespace detail

/// Builds the full network graph: 3x3 head conv, num_blocks PDAB fragments,
/// a 3x3 body conv, the sub-pixel reconstruction stages, and the final 3x3
/// conv to RGB.
inline ModelGraph build_network(const NetworkConfig& cfg) {
  cfg.validate();
  detail::GraphBuilder b;
  const int input = b.input("input");
  int x = b.conv("head", input, ConvSpec::same(3, cfg.trunk_channels, 3), /*with_bias=*/true);
  const int head = x;
  for (int d = 1; d <= cfg.num_blocks; ++d) {
    char name[32];
    std::snprintf(name, sizeof(name), "block%02d", d);
    x = detail::build_pdab(b, x, cfg, name);
  }
  x = b.conv("body_end", x, ConvSpec::same(cfg.trunk_channels, cfg.trunk_channels, 3),
             /*with_bias=*/true);
  if (cfg.global_skip) x = b.nary(OpKind::kAdd, "global_skip", {x, head});
  const auto stages = cfg.upsample_stages();
  for (size_t i = 0; i < stages.size(); ++i) {
    const int s = stages[i];
    const std::string up = "up" + std::to_string(i + 1);
    x = b.conv(up + ".conv", x,
               ConvSpec::same(cfg.trunk_channels, cfg.trunk_channels * s * s, 3),
               /*with_bias=*/true);
    x = b.pixel_shuffle(up + ".shuffle", x, s);
  }
  const int output = b.conv("tail", x, ConvSpec::same(cfg.trunk_channels, 3, 3), /*with_bias=*/true);
  return b.finish(cfg, input, output);
}

/// An attention module in isolation, operating on a (width,H,W) input.
/// Used by tests and the attention property checks.
inline ModelGraph build_attention_graph(int width, int r, Attention kind) {
  require(width > 0 && r > 0 && width % r == 0,
          "attention width must be divisible by the reduction ratio");
  detail::GraphBuilder b;
  const int input = b.input("input");
  const int out = detail::attention_module(b, input, kind, width, r, "att");
  NetworkConfig cfg;
  cfg.attention = kind;
  cfg.reduction_ratio = r;
  return b.finish(cfg, input, out);
}

/// Evaluates the (C,H,W) shape of every node for a given input size; the
/// symbolic walk used by the cost model (batch axis omitted).
inline std::vector<Shape> infer_shapes(const ModelGraph& g, const Shape& input_chw) {
  require(input_chw.size() == 3, "infer_shapes expects a (C,H,W) input shape");
  std::vector<Shape> shapes(g.nodes.size());
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const GraphNode& n = g.nodes[i];
    auto in = [&](size_t k) -> const Shape& { return shapes[static_cast<size_t>(n.args[k])]; };
    switch (n.kind) {
      case OpKind::kInput:
        shapes[i] = input_chw;
        break;
      case OpKind::kConv: {
        const Shape& s = in(0);
        if (s[0] != n.conv.in_channels)
          throw ValidationError(n.name + ": channel arithmetic mismatch (" + std::to_string(s[0]) +
                                " vs " + std::to_string(n.conv.in_channels) + ")");
        const int oh = s[1] + 2 * n.conv.padding - n.conv.effective_kernel() + 1;
        const int ow = s[2] + 2 * n.conv.padding - n.conv.effective_kernel() + 1;
        require(oh >= 1 && ow >= 1, n.name + ": kernel exceeds padded input");
        shapes[i] = {n.conv.out_channels, oh, ow};
        break;
      }
      case OpKind::kRelu:
      case OpKind::kSigmoid:
      case OpKind::kBatchNorm:
        shapes[i] = in(0);
        break;
      case OpKind::kGap:
      case OpKind::kGmp:
        shapes[i] = {in(0)[0], 1, 1};
        break;
      case OpKind::kChannelPool:
        shapes[i] = {2, in(0)[1], in(0)[2]};
        break;
      case OpKind::kPermute: {
        const Shape& s = in(0);
        shapes[i] = {s[static_cast<size_t>(n.perm3[0])], s[static_cast<size_t>(n.perm3[1])],
                     s[static_cast<size_t>(n.perm3[2])]};
        break;
      }
      case OpKind::kPixelShuffle: {
        const Shape& s = in(0);
        const int f2 = n.factor * n.factor;
        require(s[0] % f2 == 0, n.name + ": channels not divisible by factor^2");
        shapes[i] = {s[0] / f2, s[1] * n.factor, s[2] * n.factor};
        break;
      }
      case OpKind::kConcat: {
        int c = 0;
        for (int a : n.args) c += shapes[static_cast<size_t>(a)][0];
        shapes[i] = {c, in(0)[1], in(0)[2]};
        break;
      }
      case OpKind::kAdd:
      case OpKind::kMean:
      case OpKind::kMulBroadcast:
        shapes[i] = in(0);
        break;
    }
  }
  return shapes;
}

}  // namespace pdan
