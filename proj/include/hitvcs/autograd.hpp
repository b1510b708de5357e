#pragma once

// Minimal reverse-mode autodiff over Tensor<T>. A Var is a shared node;
// each differentiable op keeps its parents alive and a closure that pushes
// the node's gradient to them. With grad mode off, ops keep neither, so
// intermediates are freed as soon as the caller drops them.

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hitvcs/tensor.hpp"

namespace hitvcs::ag {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
  std::size_t size() const { return value.size(); }
};

template <typename T>
struct Node {
  Tensor<T> own;
  const Tensor<T>* external = nullptr;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  Parameter<T>* param = nullptr;
  bool requires_grad = false;

  const Tensor<T>& value() const { return external != nullptr ? *external : own; }

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value().empty()) grad = Tensor<T>(value().shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
Var<T> constant(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->own = std::move(v);
  return n;
}

template <typename T>
Var<T> param(Parameter<T>& p) {
  auto n = std::make_shared<Node<T>>();
  n->external = &p.value;
  n->param = &p;
  n->requires_grad = grad_mode();
  return n;
}

/// Creates an op result. `backward` receives the result node and must
/// accumulate into the parents' grad_buffer() of those that require grad.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->own = std::move(value);
  bool needs = false;
  if (grad_mode()) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  }
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return n;
}

/// Back-propagates from a scalar root (seed gradient 1) and accumulates
/// into Parameter::grad of every reachable parameter.
template <typename T>
void backward(const Var<T>& root) {
  if (!root || !root->requires_grad) return;
  if (root->value().size() != 1) throw ShapeError("backward() needs a scalar root");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p != nullptr && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->grad.empty()) continue;
    if (n->backward) n->backward(*n);
    if (n->param != nullptr) n->param->grad += n->grad;
  }
}

}  // namespace hitvcs::ag
