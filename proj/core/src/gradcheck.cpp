// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fingerspell/error.hpp"
#include "fingerspell/random.hpp"

namespace fsr {

Objective graph_objective(ParamSet& params, std::function<Var()> forward) {
  return [&params, forward = std::move(forward)](bool with_grad) {
    if (!with_grad) {
      NoGradGuard guard;
      return forward().value()[0];
    }
    Var out = forward();
    out.backward();
    return out.value()[0];
  };
}

GradCheckReport grad_check(ParamSet& params, const Objective& f, const GradCheckOptions& opts) {
  params.zero_grad();
  const double base = f(true);
  if (!std::isfinite(base)) throw DataError("grad_check: objective is not finite");

  std::vector<Tensor> analytic;
  for (auto& e : params.entries()) analytic.push_back(e.var.grad());

  GradCheckReport report;
  Rng rng(opts.seed);
  for (size_t p = 0; p < params.entries().size(); ++p) {
    auto& entry = params.entries()[p];
    Tensor& value = entry.var.mutable_value();
    std::vector<int64_t> idx(static_cast<size_t>(value.size()));
    std::iota(idx.begin(), idx.end(), 0);
    if (opts.max_entries > 0 && value.size() > opts.max_entries) {
      rng.shuffle(idx);
      idx.resize(static_cast<size_t>(opts.max_entries));
      std::sort(idx.begin(), idx.end());
    }
    ParamGradError err;
    err.name = entry.name;
    for (int64_t i : idx) {
      const double orig = value[i];
      value[i] = orig + opts.eps;
      const double up = f(false);
      value[i] = orig - opts.eps;
      const double down = f(false);
      value[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) throw DataError("grad_check: objective is not finite");
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      if (rel > err.max_rel_error || err.worst_index < 0) {
        err.max_rel_error = rel;
        err.worst_index = i;
        err.analytic = a;
        err.numeric = numeric;
      }
      ++err.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
    report.params.push_back(std::move(err));
  }
  report.passed = report.max_rel_error <= opts.tolerance;
  return report;
}

}  // namespace fsr
