#include "pqc/autograd.hpp"

#include <atomic>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace pqc {
namespace {

std::atomic<bool> g_finite_checks{false};

template <typename T>
void check_finite_impl(std::span<const T> values, const char* op) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw DomainError(std::string("non-finite value produced by ") + op);
    }
  }
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void check_finite(std::span<const float> values, const char* op) {
  check_finite_impl(values, op);
}
void check_finite(std::span<const double> values, const char* op) {
  check_finite_impl(values, op);
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <typename T>
Tape<T> Tape<T>::record(const Var<T>& loss) {
  Tape tape;
  if (!loss || !loss.requires_grad()) return tape;

  // Iterative post-order DFS: a node is emitted after all of its operands.
  std::unordered_set<const Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    tape.nodes_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
void Tape<T>::run_backward() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.is_leaf()) continue;
    if (!node.grad.empty()) node.backward(node);
    node.grad.clear();
    node.grad.shrink_to_fit();
  }
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss) throw NonScalarLoss("empty loss handle");
  if (loss.size() != 1) {
    throw NonScalarLoss("loss has shape " + shape_string(loss.shape()));
  }
  if (!std::isfinite(loss.value()[0])) {
    throw DomainError("loss is not finite");
  }
  if (!loss.requires_grad()) return;
  Tape<T> tape = Tape<T>::record(loss);
  loss.node()->grad_buffer()[0] += T(1);
  tape.run_backward();
}

template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace pqc
