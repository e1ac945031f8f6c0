#include "lscm/autodiff.hpp"

#include <unordered_set>

#include "lscm/errors.hpp"

namespace lscm {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (!grad_allocated) {
    grad = Tensor(value.shape());
    grad_allocated = true;
  }
  return grad;
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Tensor& Var::mutable_value() {
  if (!node_->is_leaf()) throw ContractError("mutable_value on a non-leaf node");
  return node_->value;
}

Tensor Var::grad() const {
  if (node_->grad_allocated) return node_->grad;
  return Tensor(node_->value.shape());
}

void Var::zero_grad() {
  if (node_->grad_allocated) node_->grad.fill(0.0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_result(Tensor value, const char* op, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.shared());
      n->backward = std::move(backward_fn);
    }
  }
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (!loss) throw ContractError("backward on empty Var");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf() && n->grad_allocated) n->grad.fill(0.0);
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf() && n->grad_allocated) n->backward(*n);
  }
}

}  // namespace lscm
