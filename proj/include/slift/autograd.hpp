#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace slift {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads `self.grad` and accumulates into the parents.
  std::function<void(Node& self)> backward_fn;

  void accumulate(Tensor<T>&& g) {
    if (!requires_grad) return;
    if (g.dims() != value.dims())
      throw ShapeError(op + ": gradient dims " + dims_str(g.dims()) + " do not match value " + dims_str(value.dims()));
    if (grad.empty()) {
      grad = std::move(g);
      return;
    }
    auto dst = grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
};

// Handle on a tape node. Copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<T> value, bool requires_grad, std::string name = "leaf") {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->op = std::move(name);
    return Var(std::move(n));
  }
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false, "const"); }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor<T>(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Dims& dims() const { return node_->value.dims(); }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Records a result node. Parents that do not require grad are dropped and the
// closure is omitted entirely when none do, so inference builds no tape.
template <class T>
Var<T> make_result(std::string op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = std::move(op);
  bool any = false;
  for (auto& v : inputs) any = any || v.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& v : inputs) n->parents.push_back(v.shared());
    n->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(n));
}

// Reverse-mode sweep from a scalar loss. Traversal order depends only on the
// graph structure, so repeated sweeps over the same graph are bit-identical.
// Gradients of interior nodes are released once propagated; leaves keep theirs.
template <class T>
void backward(const Var<T>& loss) {
  if (!loss) throw ShapeError("backward on empty variable");
  if (loss.value().numel() != 1) throw ShapeError("backward needs a scalar loss, got dims " + dims_str(loss.dims()));
  Node<T>* root = loss.node();
  if (!root->requires_grad) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->accumulate(Tensor<T>(root->value.dims(), T{1}));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn || n->grad.empty()) continue;
    n->backward_fn(*n);
    n->grad = Tensor<T>();
  }
}

}  // namespace slift
