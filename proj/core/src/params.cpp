// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/params.hpp"

#include <cmath>

#include "fingerspell/error.hpp"
#include "fingerspell/random.hpp"

namespace fsr {

Var& ParamSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter name '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, Var(std::move(value), true)});
  return entries_.back().var;
}

Var& ParamSet::add_uniform(const std::string& name, Shape shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(1, fan_in)));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  return add(name, std::move(t));
}

Var& ParamSet::add_zeros(const std::string& name, Shape shape) { return add(name, Tensor(std::move(shape))); }

Var& ParamSet::add_constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor(std::move(shape), value));
}

const Var& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return entries_[it->second].var;
}

Var& ParamSet::get(const std::string& name) {
  return const_cast<Var&>(static_cast<const ParamSet&>(*this).get(name));
}

Var ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? Var() : entries_[it->second].var;
}

int64_t ParamSet::total_elements() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

void ParamSet::round_to_storage() {
  for (auto& e : entries_)
    for (auto& v : e.var.mutable_value().values()) v = static_cast<double>(static_cast<float>(v));
}

double ParamSet::grad_norm() const {
  double s = 0.0;
  for (const auto& e : entries_)
    for (double g : e.var.grad().values()) s += g * g;
  return std::sqrt(s);
}

}  // namespace fsr
