#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pdan/tensor.hpp"

namespace pdan {

struct GradCheckInput {
  std::string name;
  Tensor<double>* value;               // perturbed in place
  const Tensor<double>* analytic_grad; // gradient of the scalar w.r.t. value
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  std::string worst_input;
  long long worst_index = -1;
  double worst_analytic = 0.0, worst_numeric = 0.0;
  bool pass = false;

  std::string summary() const {
    return "max rel err " + std::to_string(max_rel_err) + " at " + worst_input + "[" +
           std::to_string(worst_index) + "] (analytic " + std::to_string(worst_analytic) +
           ", central diff " + std::to_string(worst_numeric) + "), tolerance " +
           std::to_string(tolerance);
  }
};

/// Central-difference verification of reverse-mode gradients, 64-bit only.
/// For every element of every input: |analytic - cd| / max(1, |cd|) <= tol.
/// `eval` recomputes the scalar from the inputs' current values. Callers that
/// hit non-differentiable points (relu kinks, pooling ties) resample and
/// retry; this harness just reports the worst offender.
template <typename EvalFn>
GradCheckReport grad_check(const std::vector<GradCheckInput>& inputs, EvalFn&& eval, double step,
                           double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& in : inputs) {
    Tensor<double>& v = *in.value;
    for (long long i = 0; i < v.numel(); ++i) {
      const double saved = v[i];
      v[i] = saved + step;
      const double f1 = eval();
      v[i] = saved - step;
      const double f2 = eval();
      v[i] = saved;
      const double cd = (f1 - f2) / (2.0 * step);
      const double analytic = (*in.analytic_grad)[i];
      const double rel = std::abs(analytic - cd) / std::max(1.0, std::abs(cd));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = in.name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = cd;
      }
    }
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace pdan
