// Copyright 2026 The facefill Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "facefill/tensor.hpp"

namespace facefill {

template <typename T>
class Var;

template <typename T>
struct Node {
  using Backward = std::function<std::vector<Var<T>>(const Var<T>&)>;

  Tensor<T> value;
  std::vector<Var<T>> inputs;
  Backward backward;  // empty for leaves
  bool requires_grad = false;
  const char* op = "leaf";
};

/// Thread-local switch for graph recording. Backward rules run with recording
/// disabled unless a higher-order gradient was requested.
class GradMode {
 public:
  static bool enabled() { return flag(); }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
  friend class GradModeGuard;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : prev_(GradMode::flag()) {
    GradMode::flag() = enabled;
  }
  ~GradModeGuard() { GradMode::flag() = prev_; }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

/// Convenience guard that disables recording for its scope.
class NoGrad : public GradModeGuard {
 public:
  NoGrad() : GradModeGuard(false) {}
};

/// Handle to a node of the differentiation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  /*implicit*/ Var(Tensor<T> value)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
  }

  /// Leaf that gradients may be requested for.
  static Var leaf(Tensor<T> value, bool requires_grad = true) {
    Var v(std::move(value));
    v.node_->requires_grad = requires_grad;
    return v;
  }

  /// Interior node. Inputs and the backward rule are kept only when recording
  /// is on and some input needs a gradient.
  static Var make(Tensor<T> value, std::vector<Var> inputs,
                  typename Node<T>::Backward backward, const char* op) {
    Var v(std::move(value));
    v.node_->op = op;
    if (!GradMode::enabled()) return v;
    bool any = false;
    for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
    if (!any) return v;
    v.node_->requires_grad = true;
    v.node_->inputs = std::move(inputs);
    v.node_->backward = std::move(backward);
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  /// Mutable access for optimizers and loaders; never call while a graph
  /// that depends on this node is alive.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  T item() const { return node_->value.item(); }
  Node<T>* node() const { return node_.get(); }

  /// Same value, no history.
  Var detach() const { return Var(node_->value); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

namespace detail {

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].node();
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // children before parents
}

}  // namespace detail

/// Reverse-mode gradients of a scalar `output` with respect to `wrt`.
/// Unreached inputs get zero gradients. With `create_graph` the returned
/// gradients are themselves differentiable.
template <typename T>
std::vector<Var<T>> grad(const Var<T>& output, const std::vector<Var<T>>& wrt,
                         bool create_graph = false) {
  if (output.numel() != 1)
    throw ParameterError("grad() needs a scalar output, got shape " +
                         to_string(output.shape()));
  std::vector<Var<T>> result;
  result.reserve(wrt.size());
  if (!output.requires_grad()) {
    for (const auto& w : wrt) result.emplace_back(Tensor<T>(w.shape()));
    return result;
  }
  GradModeGuard mode(create_graph);
  std::unordered_map<Node<T>*, Var<T>> grads;
  grads[output.node()] = Var<T>(Tensor<T>(output.shape(), T(1)));
  std::unordered_set<Node<T>*> targets;
  for (const auto& w : wrt) targets.insert(w.node());

  const auto order = detail::topo_order(output.node());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    auto g = grads.find(node);
    if (g == grads.end() || !node->backward) continue;
    std::vector<Var<T>> in_grads = node->backward(g->second);
    // Interior gradients are no longer needed once propagated.
    if (!targets.count(node)) grads.erase(g);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      Node<T>* child = node->inputs[i].node();
      if (!child || !child->requires_grad || !in_grads[i].defined()) continue;
      auto existing = grads.find(child);
      if (existing == grads.end())
        grads.emplace(child, std::move(in_grads[i]));
      else
        existing->second = add(existing->second, in_grads[i]);
    }
  }
  for (const auto& w : wrt) {
    auto g = grads.find(w.node());
    result.push_back(g == grads.end() ? Var<T>(Tensor<T>(w.shape())) : g->second);
  }
  return result;
}

}  // namespace facefill
