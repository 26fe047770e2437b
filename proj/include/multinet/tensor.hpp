// Reverse-mode autodiff tensor.
//
// A Tensor is a cheap handle to a node holding value data, an optional
// gradient buffer and, for op results, a backward closure plus links to the
// operand nodes. Calling backward() on a scalar walks the recorded graph in
// reverse topological order and accumulates gradients into every node that
// requires them. Leaf gradients persist across backward calls until
// zero_grad(), which is what lets several task losses sum their gradients
// into shared parameters.
//
// Feature maps are laid out NCHW. No broadcasting; operand shapes must agree
// exactly where an op says so.
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "multinet/common.hpp"

namespace multinet {

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorNode {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily; empty means all-zero
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  long long size() const { return static_cast<long long>(value.size()); }

  T* ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    for (int d : shape) check_arg(d > 0, "tensor dimension must be positive, got shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<size_t>(numel(node_->shape)), fill);
    node_->requires_grad = requires_grad;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    check_arg(static_cast<long long>(data.size()) == numel(shape),
              "data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    Tensor t(std::move(shape), T(0), requires_grad);
    t.node_->value = std::move(data);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  long long size() const { return node_->size(); }

  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }

  // Element access for 4-d (N,C,H,W) and 2-d tensors; test/debug convenience.
  T& at(int n, int c, int h, int w) {
    return node_->value[static_cast<size_t>(((static_cast<long long>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }
  T at(int n, int c, int h, int w) const { return const_cast<Tensor*>(this)->at(n, c, h, w); }
  T& at(int i, int j) { return node_->value[static_cast<size_t>(static_cast<long long>(i) * dim(1) + j)]; }
  T at(int i, int j) const { return const_cast<Tensor*>(this)->at(i, j); }

  T scalar() const {
    check_arg(size() == 1, "scalar() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const T* grad_data() const { return node_->grad.empty() ? nullptr : node_->grad.data(); }
  T* grad_data() { return node_->grad.empty() ? nullptr : node_->grad.data(); }
  T* ensure_grad() { return node_->ensure_grad(); }
  T grad_at(long long i) const { return node_->grad.empty() ? T(0) : node_->grad[static_cast<size_t>(i)]; }

  void zero_grad() { node_->grad.clear(); }

  // Value copy detached from any recorded graph.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    return t;
  }

  // Runs reverse-mode accumulation from this scalar.
  void backward() {
    check_arg(size() == 1, "backward() needs a scalar, got shape " + shape_str(shape()));
    std::vector<Node*> order;
    topo_sort(order);
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Builds an op result. `backward` receives the result node with its grad
  // populated and accumulates into the parents it captured.
  static Tensor make_op(std::vector<int> shape, std::vector<T> value, const std::vector<Tensor>& inputs,
                        std::function<void(Node&)> backward) {
    Tensor out = from_data(std::move(shape), std::move(value));
    for (const Tensor& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        out.node_->requires_grad = true;
        break;
      }
    }
    if (out.node_->requires_grad) {
      out.node_->backward_fn = std::move(backward);
      for (const Tensor& in : inputs)
        if (in.defined()) out.node_->parents.push_back(in.node_);
    }
    return out;
  }

 private:
  // Iterative post-order DFS over parents.
  void topo_sort(std::vector<Node*>& order) const {
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace multinet
