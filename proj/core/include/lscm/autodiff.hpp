#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lscm/tensor.hpp"

namespace lscm {

/// One entry of the computation record. Parents are owned, children are not,
/// so the record is acyclic by construction.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_allocated = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require it.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
  bool is_leaf() const { return !backward; }
};

/// Handle to a node of the computation record.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  /// Trainable leaf: gradients accumulate here across backward calls.
  static Var parameter(Tensor value);

  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizers; only legal on leaves.
  Tensor& mutable_value();
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }

  /// Accumulated gradient, or zeros when nothing has been accumulated.
  Tensor grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
/// intermediate gradients are recomputed each call.
void backward(const Var& loss);

/// Disables recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds a result node. The backward closure is attached only when recording
/// is enabled and some parent requires a gradient.
Var make_result(Tensor value, const char* op, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn);

}  // namespace lscm
