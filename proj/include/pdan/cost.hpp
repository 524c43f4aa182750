#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pdan/graph.hpp"
#include "pdan/model.hpp"

namespace pdan {

/// Per-node accounting. Conventions (the ones under which Table-style FLOP
/// figures are reproducible): one multiply-accumulate is one FLOP; conv bias
/// adds count one per output element and land in aux; pooling, sigmoid,
/// batchnorm (2/element), broadcast scaling and k-way means count per element
/// they produce; ReLU, concat, permute, shuffle and residual adds are free.
struct LayerCost {
  std::string node;
  long long params_w = 0;
  long long params_b = 0;
  long long macs = 0;
  long long aux = 0;
  int out_h = 0, out_w = 0;

  std::string resolution() const { return std::to_string(out_h) + "x" + std::to_string(out_w); }
};

struct CostReport {
  std::vector<LayerCost> layers;
  long long total_w = 0, total_b = 0, total_macs = 0, total_aux = 0;
  int hr_size = 0;
  int scale = 1;

  long long total_params() const { return total_w + total_b; }
  long long params_k() const { return std::llround(static_cast<double>(total_params()) / 1000.0); }
  double flops_g() const { return static_cast<double>(total_macs + total_aux) / 1e9; }
};

/// Eq.-style conv accounting: weights = C_out*(C_in/G)*K^2 (exactly the dense
/// count divided by G), bias = C_out, MACs = weights * output positions.
inline LayerCost conv_cost(const ConvSpec& spec, int out_h, int out_w, bool with_bias = true) {
  spec.validate();
  LayerCost c;
  c.params_w = spec.weight_count();
  c.params_b = with_bias ? spec.out_channels : 0;
  c.macs = c.params_w * out_h * out_w;
  c.aux = with_bias ? static_cast<long long>(spec.out_channels) * out_h * out_w : 0;
  c.out_h = out_h;
  c.out_w = out_w;
  return c;
}

/// Walks the same graph the architecture builder produces, symbolically, at
/// the LR resolution implied by hr_size; shuffle stages are costed at their
/// true intermediate resolutions.
inline CostReport network_cost(const NetworkConfig& cfg, int hr_size) {
  cfg.validate();
  require(hr_size > 0 && hr_size % cfg.scale == 0,
          "hr_size must be a positive multiple of the scale");
  const ModelGraph g = build_network(cfg);
  const int lr = hr_size / cfg.scale;
  const auto shapes = infer_shapes(g, Shape{3, lr, lr});

  CostReport report;
  report.hr_size = hr_size;
  report.scale = cfg.scale;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const GraphNode& n = g.nodes[i];
    const Shape& out = shapes[i];
    const long long numel = static_cast<long long>(out[0]) * out[1] * out[2];
    LayerCost c;
    c.node = n.name;
    c.out_h = out[1];
    c.out_w = out[2];
    switch (n.kind) {
      case OpKind::kConv: {
        c = conv_cost(n.conv, out[1], out[2], n.bias >= 0);
        c.node = n.name;
        if (!n.owns_params) {
          c.params_w = 0;
          c.params_b = 0;
        }
        break;
      }
      case OpKind::kBatchNorm:
        c.params_w = out[0];  // gamma
        c.params_b = out[0];  // beta
        c.aux = 2 * numel;
        break;
      case OpKind::kGap:
      case OpKind::kGmp:
      case OpKind::kChannelPool:
      case OpKind::kSigmoid:
      case OpKind::kMulBroadcast:
        c.aux = numel;
        break;
      case OpKind::kMean:
        c.aux = static_cast<long long>(n.args.size()) * numel;
        break;
      case OpKind::kInput:
      case OpKind::kRelu:
      case OpKind::kPermute:
      case OpKind::kPixelShuffle:
      case OpKind::kConcat:
      case OpKind::kAdd:
        break;
    }
    if (c.params_w == 0 && c.params_b == 0 && c.macs == 0 && c.aux == 0) continue;
    report.total_w += c.params_w;
    report.total_b += c.params_b;
    report.total_macs += c.macs;
    report.total_aux += c.aux;
    report.layers.push_back(std::move(c));
  }
  return report;
}

struct CountMismatch {
  std::string node;
  long long analytic = 0;
  long long actual = 0;
};

struct VerifyResult {
  bool ok = true;
  std::vector<CountMismatch> mismatches;
  long long analytic_total = 0;
  long long actual_total = 0;
};

/// Cross-checks the analytic parameter counts against an enumeration of the
/// instantiated ParamStore, per layer and in total; exact equality required.
template <typename T>
VerifyResult verify_counts(const Model<T>& model, const CostReport& report) {
  VerifyResult result;
  result.analytic_total = report.total_params();
  result.actual_total = model.parameter_count();

  // actual per-node counts from the instantiated tensors
  for (const auto& n : model.graph.nodes) {
    long long actual = 0;
    long long analytic = -1;
    if (n.kind == OpKind::kConv && n.owns_params) {
      actual = model.params[static_cast<size_t>(n.weight)].numel() +
               (n.bias >= 0 ? model.params[static_cast<size_t>(n.bias)].numel() : 0);
    } else if (n.kind == OpKind::kBatchNorm) {
      actual = model.params[static_cast<size_t>(n.bn_gamma)].numel() +
               model.params[static_cast<size_t>(n.bn_beta)].numel();
    } else {
      continue;
    }
    for (const auto& row : report.layers)
      if (row.node == n.name) {
        analytic = row.params_w + row.params_b;
        break;
      }
    if (analytic != actual) {
      result.ok = false;
      result.mismatches.push_back(CountMismatch{n.name, analytic, actual});
    }
  }
  if (result.analytic_total != result.actual_total) result.ok = false;
  return result;
}

inline void write_cost_table(std::ostream& os, const CostReport& r) {
  os << std::left << std::setw(34) << "node" << std::right << std::setw(12) << "params_w"
     << std::setw(10) << "params_b" << std::setw(16) << "macs" << std::setw(14) << "aux"
     << std::setw(12) << "resolution" << "\n";
  for (const auto& c : r.layers)
    os << std::left << std::setw(34) << c.node << std::right << std::setw(12) << c.params_w
       << std::setw(10) << c.params_b << std::setw(16) << c.macs << std::setw(14) << c.aux
       << std::setw(12) << c.resolution() << "\n";
  os << std::left << std::setw(34) << "TOTAL" << std::right << std::setw(12) << r.total_w
     << std::setw(10) << r.total_b << std::setw(16) << r.total_macs << std::setw(14) << r.total_aux
     << "\n";
}

inline void write_cost_csv(std::ostream& os, const CostReport& r) {
  os << "node,params_w,params_b,macs,resolution\n";
  for (const auto& c : r.layers)
    os << c.node << "," << c.params_w << "," << c.params_b << "," << c.macs << ","
       << c.resolution() << "\n";
  os << "TOTAL," << r.total_w << "," << r.total_b << "," << r.total_macs << ",\n";
}

/// The one-line summary the inspect command prints.
inline std::string cost_summary(const CostReport& r) {
  std::ostringstream os;
  os << "params: " << r.params_k() << "K, flops: ~" << std::fixed << std::setprecision(2)
     << r.flops_g() << " G";
  return os.str();
}

}  // namespace pdan
