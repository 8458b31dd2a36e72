// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fingerspell/autograd.hpp"

namespace fsr {

class Rng;

/// Named trainable tensors in registration order.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Var var;
  };

  /// Register a tensor; throws if the name is taken.
  Var& add(const std::string& name, Tensor value);
  /// Weight initialised uniformly in ±1/sqrt(fan_in).
  Var& add_uniform(const std::string& name, Shape shape, int64_t fan_in, Rng& rng);
  Var& add_zeros(const std::string& name, Shape shape);
  Var& add_constant(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Var& get(const std::string& name) const;
  Var& get(const std::string& name);
  /// Undefined Var when absent.
  Var find(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  size_t count() const { return entries_.size(); }
  int64_t total_elements() const;

  void zero_grad();
  /// Round every value to the nearest float32 so checkpoints are lossless.
  void round_to_storage();
  /// Global L2 norm of all gradients.
  double grad_norm() const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

}  // namespace fsr
