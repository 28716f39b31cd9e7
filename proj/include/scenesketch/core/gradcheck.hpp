#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "scenesketch/core/graph.hpp"
#include "scenesketch/core/rng.hpp"

namespace scenesketch {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so that gradients which are
  /// zero up to rounding are compared absolutely. Central differences at
  /// h = 1e-5 carry about eps * |L| / h ~ 1e-10 of rounding for O(1) losses.
  double relative_floor = 1e-5;
  /// Elements checked per parameter; 0 checks every element.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

using LossBuilder = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients of `loss` with central finite differences.
inline GradCheckReport grad_check(const LossBuilder& loss, ParamStore& params,
                                  const GradCheckOptions& opt = {}) {
  params.zero_grad();
  {
    Graph g;
    Var l = loss(g);
    g.backward(l);
  }
  auto evaluate = [&]() {
    Graph g;
    return loss(g).item();
  };

  GradCheckReport report;
  Rng rng(opt.seed);
  for (auto& p : params) {
    std::vector<std::size_t> idx(p.value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opt.max_elements_per_param > 0 && idx.size() > opt.max_elements_per_param) {
      rng.shuffle(idx);
      idx.resize(opt.max_elements_per_param);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double orig = p.value[i];
      p.value[i] = orig + opt.step;
      const double fp = evaluate();
      p.value[i] = orig - opt.step;
      const double fm = evaluate();
      p.value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double analytic = p.grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.relative_floor});
      const double rel = abs_err / denom;
      report.checked += 1;
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error < opt.tolerance;
  return report;
}

}  // namespace scenesketch
