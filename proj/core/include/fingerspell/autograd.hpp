// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fingerspell/tensor.hpp"

namespace fsr {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the dynamic computation graph. `backward` reads this node's
/// gradient and accumulates into the gradients of `inputs`.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  Node(Tensor v, bool req);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  /// Gradient buffer, zero-initialised on first access.
  Tensor& grad_buffer();

 private:
  int64_t metered_ = 0;
  uint64_t generation_ = 0;
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Gradient accumulated by backward(); zeros if none was propagated.
  const Tensor& grad() const { return node_->grad_buffer(); }
  Tensor& grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// Reverse-mode sweep seeded with d(self)/d(self) = 1. Self must be scalar
  /// unless `seed` is given.
  void backward();
  void backward(const Tensor& seed);

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Build a result node. When grad mode is off or no input requires a gradient,
/// the closure is dropped and the inputs are not retained.
Var make_result(Tensor value, std::vector<NodePtr> inputs,
                std::function<void(Node&)> backward);

bool grad_enabled();

/// Disables graph construction in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Counts elements held by graph nodes created while the meter is active.
/// Tracks the live total and its peak; only one meter may be active.
class ActivationMeter {
 public:
  ActivationMeter();
  ~ActivationMeter();
  ActivationMeter(const ActivationMeter&) = delete;
  ActivationMeter& operator=(const ActivationMeter&) = delete;

  int64_t live() const;
  int64_t peak() const;
};

}  // namespace fsr
