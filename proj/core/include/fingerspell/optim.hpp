// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fingerspell/params.hpp"

namespace fsr {

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay:
///   p -= lr * wd * p
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class AdamW {
 public:
  AdamW(ParamSet& params, AdamWOptions options);

  /// One update from the gradients currently stored in the parameters.
  void step();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  int64_t steps() const { return t_; }

 private:
  ParamSet& params_;
  AdamWOptions options_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

/// lr0 * gamma^k with k = number of milestones <= epoch (epochs count from 0).
double multistep_lr(double lr0, double gamma, const std::vector<int>& milestones, int epoch);

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamSet& params, double max_norm);

}  // namespace fsr
