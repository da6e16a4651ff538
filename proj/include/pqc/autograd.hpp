#pragma once

// Reverse-mode automatic differentiation.
//
// A Var is a shared handle to a graph node holding a forward value. Operations
// that see at least one input requiring a gradient record their inputs and a
// backward rule on the produced node; otherwise the result is a plain
// constant. backward() linearises the reachable graph into a Tape (operands
// before users), seeds d(loss)/d(loss) = 1 and replays the rules in reverse,
// accumulating into every leaf that requires a gradient.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pqc/tensor.hpp"

namespace pqc {

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  T* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var constant(Tensor<T> value) { return Var(std::move(value), false); }
  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  explicit operator bool() const { return static_cast<bool>(node_); }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return {node_->grad_buffer(), node_->value.size()}; }
  Tensor<T> grad_tensor() const {
    if (node_->grad.empty()) return Tensor<T>(shape());
    return Tensor<T>(shape(), node_->grad);
  }
  void zero_grad() {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Opt-in scan of every operation result for NaN/Inf (DomainError on hit).
// Off by default: the scan doubles the cost of memory-bound operations.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
void check_finite(std::span<const float> values, const char* op);
void check_finite(std::span<const double> values, const char* op);

// Builds the result of an operation, recording the backward rule only when
// some input requires a gradient.
template <typename T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward) {
  if (finite_checks_enabled()) check_finite(value.data(), op);
  Var<T> out(std::move(value), false);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.parents.reserve(inputs.size());
    for (auto& in : inputs) node.parents.push_back(in.node());
    node.backward = std::move(backward);
  }
  return out;
}

// Ordered record of the nodes reachable from a loss through gradient-carrying
// edges; every node appears after all of its operands, exactly once.
template <typename T>
class Tape {
 public:
  static Tape record(const Var<T>& loss);

  const std::vector<Node<T>*>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  // Replays backward rules from the last node to the first. Interior grads
  // are released as soon as they have been propagated.
  void run_backward();

 private:
  std::vector<Node<T>*> nodes_;
};

// Populates grads on every requires_grad leaf reachable from `loss`.
// Grads accumulate additively across calls until cleared.
template <typename T>
void backward(const Var<T>& loss);

}  // namespace pqc
