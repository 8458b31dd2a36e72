// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/optim.hpp"

#include <cmath>

#include "fingerspell/error.hpp"

namespace fsr {

AdamW::AdamW(ParamSet& params, AdamWOptions options) : params_(params), options_(options) {
  if (!(options_.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0 && options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
    throw ConfigError("adamw betas must lie in [0, 1)");
  }
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.var.shape());
    v_.emplace_back(e.var.shape());
  }
}

void AdamW::step() {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2, lr = options_.lr;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto& entries = params_.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    Var& p = entries[i].var;
    Tensor& w = p.mutable_value();
    const Tensor& g = p.grad();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (int64_t j = 0; j < w.size(); ++j) {
      w[j] -= lr * options_.weight_decay * w[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.eps);
    }
  }
}

double multistep_lr(double lr0, double gamma, const std::vector<int>& milestones, int epoch) {
  int k = 0;
  for (int m : milestones)
    if (m <= epoch) ++k;
  return lr0 * std::pow(gamma, k);
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  const double norm = params.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& e : params.entries())
      for (auto& g : e.var.grad().values()) g *= s;
  }
  return norm;
}

}  // namespace fsr
