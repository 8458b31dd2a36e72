// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fingerspell/params.hpp"

namespace fsr {

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so entries whose true gradient
  /// is ~0 are judged on absolute error instead.
  double floor = 1e-3;
  /// Check at most this many entries per tensor (chosen at random); 0 = all.
  int64_t max_entries = 0;
  uint64_t seed = 1;
};

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int64_t checked = 0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Objective evaluated by the checker. When `with_grad` is true it must leave
/// d(value)/d(param) in each parameter's grad (the checker zeroes them first).
using Objective = std::function<double(bool with_grad)>;

/// Compares analytic gradients with central differences
/// (f(x + eps) - f(x - eps)) / (2 eps) for every checked entry.
/// Throws DataError if the objective is not finite.
GradCheckReport grad_check(ParamSet& params, const Objective& f, const GradCheckOptions& opts = {});

/// Objective built from a graph: forward returns a scalar Var.
Objective graph_objective(ParamSet& params, std::function<Var()> forward);

}  // namespace fsr
