/* Copyright 2026 The Ada2Net Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Dense NCHW tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a Node. Every differentiable primitive
// creates a fresh Node holding its value and, when any input requires a
// gradient and recording is enabled, a backward rule plus references to its
// inputs. The recorded structure is rebuilt on every forward pass, so the
// topology may differ per input (adaptive blocks rely on this).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ada2net/error.hpp"

namespace ada2net::nd {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string toString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(std::span<const T> gradOut)>;

template <typename T>
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<T>> value;
  std::vector<T> grad;
  bool requiresGrad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn<T> backward;
  bool interior = false;

  bool isLeaf() const { return !interior; }

  std::vector<T>& gradBuffer() {
    if (grad.empty()) grad.assign(value->size(), T(0));
    return grad;
  }
};

namespace detail {

inline bool& gradModeFlag() {
  thread_local bool enabled = true;
  return enabled;
}

// Name of a primitive whose backward rule is deliberately corrupted; used by
// the self-check fault-injection fixture. Empty in normal operation.
inline std::string& injectedFault() {
  thread_local std::string name;
  return name;
}

}  // namespace detail

inline bool gradEnabled() { return detail::gradModeFlag(); }

// Suspends graph recording for the current thread.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::gradModeFlag()) {
    detail::gradModeFlag() = false;
  }
  ~NoGradGuard() { detail::gradModeFlag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Scales the incoming gradient of every node produced by `primitive` by 1.5
// while alive. Test fixture only.
class FaultInjection {
 public:
  explicit FaultInjection(std::string primitive)
      : previous_(detail::injectedFault()) {
    detail::injectedFault() = std::move(primitive);
  }
  ~FaultInjection() { detail::injectedFault() = previous_; }
  FaultInjection(const FaultInjection&) = delete;
  FaultInjection& operator=(const FaultInjection&) = delete;

 private:
  std::string previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{1}, std::vector<T>{T(0)}) {}

  Tensor(Shape shape, std::vector<T> values, bool requiresGrad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (nd::numel(shape) != values.size())
      throw ShapeError(ada2net::detail::concat("tensor: shape ", toString(shape),
                                      " holds ", nd::numel(shape),
                                      " elements but ", values.size(),
                                      " were given"));
    for (auto d : shape)
      if (d == 0)
        throw ShapeError("tensor: zero-sized dimension in " + toString(shape));
    node_->shape = std::move(shape);
    node_->value = std::make_shared<std::vector<T>>(std::move(values));
    node_->requiresGrad = requiresGrad;
  }

  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requiresGrad = false) {
    auto n = nd::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requiresGrad);
  }

  static Tensor full(Shape shape, T v, bool requiresGrad = false) {
    auto n = nd::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v), requiresGrad);
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value->size(); }

  std::span<const T> values() const { return *node_->value; }
  T at(std::size_t i) const { return (*node_->value)[i]; }

  T item() const {
    if (numel() != 1)
      throw ShapeError("item: tensor of shape " + toString(shape()) +
                       " is not a scalar");
    return (*node_->value)[0];
  }

  // Direct write access, reserved for leaves (parameters) between
  // iterations. Tensors participating in a recorded graph are never mutated.
  std::span<T> mutableValues() {
    if (!node_->isLeaf())
      throw Error("mutableValues: refusing to mutate a recorded result of '" +
                  std::string(node_->op) + "'");
    return *node_->value;
  }

  bool requiresGrad() const { return node_->requiresGrad; }

  void setRequiresGrad(bool on) {
    if (!node_->isLeaf())
      throw Error("setRequiresGrad: only leaves can be toggled");
    node_->requiresGrad = on;
  }

  bool hasGrad() const { return !node_->grad.empty(); }

  // Accumulated gradient; zeros when nothing has been accumulated yet.
  std::vector<T> grad() const {
    if (node_->grad.empty()) return std::vector<T>(numel(), T(0));
    return node_->grad;
  }

  std::span<T> mutableGrad() { return node_->gradBuffer(); }

  void zeroGrad() {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }

  // A new leaf sharing this tensor's storage, cut off from the graph.
  Tensor detach() const {
    auto n = std::make_shared<Node<T>>();
    n->shape = node_->shape;
    n->value = node_->value;
    return Tensor(std::move(n));
  }

  // Deep copy as a fresh leaf.
  Tensor clone(bool requiresGrad = false) const {
    return Tensor(shape(), *node_->value, requiresGrad);
  }

  std::string_view op() const { return node_->op; }
  bool isLeaf() const { return node_->isLeaf(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }
  Node<T>* raw() const { return node_.get(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
void requireFinite(std::string_view op, std::span<const T> v) {
  // x * 0 is NaN exactly when x is NaN or infinite; the reduction vectorizes.
  T acc = T(0);
  for (T x : v) acc += x * T(0);
  if (acc != acc)
    throw NumericError(std::string(op) + ": non-finite input");
}

template <typename T>
void requireFinite(std::string_view op, const Tensor<T>& t) {
  requireFinite<T>(op, t.values());
}

// Wraps a forward result; attaches `fn` when recording is on and any input
// requires a gradient.
template <typename T>
Tensor<T> record(std::string_view op, Shape shape, std::vector<T> out,
                 std::initializer_list<const Tensor<T>*> inputs,
                 BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::make_shared<std::vector<T>>(std::move(out));
  node->op = op;
  bool anyGrad = false;
  for (const auto* in : inputs) anyGrad = anyGrad || in->requiresGrad();
  if (anyGrad && gradEnabled()) {
    node->requiresGrad = true;
    node->interior = true;
    for (const auto* in : inputs) node->inputs.push_back(in->node());
    node->backward = std::move(fn);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> recordMany(std::string_view op, Shape shape, std::vector<T> out,
                     const std::vector<Tensor<T>>& inputs, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::make_shared<std::vector<T>>(std::move(out));
  node->op = op;
  bool anyGrad = false;
  for (const auto& in : inputs) anyGrad = anyGrad || in.requiresGrad();
  if (anyGrad && gradEnabled()) {
    node->requiresGrad = true;
    node->interior = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(fn);
  }
  return Tensor<T>(std::move(node));
}

// Gradient sink for an input, or nullptr when it does not need one.
template <typename T>
T* sink(Node<T>* n) {
  return n->requiresGrad ? n->gradBuffer().data() : nullptr;
}

}  // namespace detail

// Recorded computation reachable from a root, in topological order (every
// node's inputs precede it).
template <typename T>
class Graph {
 public:
  explicit Graph(const Tensor<T>& root) : root_(root) {
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    if (root.requiresGrad()) stack.emplace_back(root.raw(), 0);
    if (root.requiresGrad()) seen.insert(root.raw());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const auto& child = node->inputs[next++];
        if (child->requiresGrad && seen.insert(child.get()).second) {
          owned_.push_back(child);
          stack.emplace_back(child.get(), 0);
        }
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::span<Node<T>* const> nodes() const { return order_; }

  // Propagates d(root)/d(leaf) into every reachable leaf that requires a
  // gradient. Leaf gradients accumulate across calls; interior gradients and
  // saved state are released.
  void backward() {
    if (root_.numel() != 1 || root_.rank() > 1)
      throw ShapeError("backward: loss must have shape [1], got " +
                       toString(root_.shape()));
    if (!root_.requiresGrad()) return;
    root_.raw()->gradBuffer()[0] += T(1);
    const std::string& fault = detail::injectedFault();
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node<T>* node = *it;
      if (node->isLeaf()) continue;
      if (!node->grad.empty() && node->backward) {
        if (!fault.empty() && node->op == fault)
          for (auto& g : node->grad) g *= T(1.5);
        node->backward(node->grad);
      }
      node->grad.clear();
      node->grad.shrink_to_fit();
      node->backward = nullptr;
      node->inputs.clear();
    }
  }

 private:
  Tensor<T> root_;
  std::vector<Node<T>*> order_;
  // Keeps nodes alive while backward() severs input edges.
  std::vector<std::shared_ptr<Node<T>>> owned_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  Graph<T>(loss).backward();
}

}  // namespace ada2net::nd
