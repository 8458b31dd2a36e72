// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "fingerspell/error.hpp"

namespace fsr {
namespace {

thread_local bool g_grad_enabled = true;

struct MeterState {
  std::atomic<bool> active{false};
  std::atomic<uint64_t> generation{0};
  std::atomic<int64_t> live{0};
  std::atomic<int64_t> peak{0};
};

MeterState& meter() {
  static MeterState state;
  return state;
}

}  // namespace

Node::Node(Tensor v, bool req) : value(std::move(v)), requires_grad(req) {
  auto& m = meter();
  if (m.active.load(std::memory_order_relaxed)) {
    metered_ = value.size();
    generation_ = m.generation.load();
    const int64_t now = m.live.fetch_add(metered_) + metered_;
    int64_t prev = m.peak.load();
    while (now > prev && !m.peak.compare_exchange_weak(prev, now)) {
    }
  }
}

Node::~Node() {
  auto& m = meter();
  if (metered_ && m.active.load(std::memory_order_relaxed) && generation_ == m.generation.load()) {
    m.live.fetch_sub(metered_);
  }
}

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad)
    : node_(std::make_shared<Node>(std::move(value), requires_grad)) {}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

void Var::backward() {
  if (value().size() != 1) throw ShapeError("backward() without a seed requires a scalar");
  backward(Tensor(value().shape(), 1.0));
}

void Var::backward(const Tensor& seed) {
  if (seed.shape() != value().shape()) throw ShapeError("backward seed shape mismatch");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().add_(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Var make_result(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> backward) {
  const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& p) {
                       return p && p->requires_grad;
                     });
  auto node = std::make_shared<Node>(std::move(value), needs);
  if (needs) {
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

ActivationMeter::ActivationMeter() {
  auto& m = meter();
  if (m.active.exchange(true)) throw std::logic_error("an ActivationMeter is already active");
  m.generation.fetch_add(1);
  m.live.store(0);
  m.peak.store(0);
}

ActivationMeter::~ActivationMeter() { meter().active.store(false); }

int64_t ActivationMeter::live() const { return meter().live.load(); }
int64_t ActivationMeter::peak() const { return meter().peak.load(); }

}  // namespace fsr
