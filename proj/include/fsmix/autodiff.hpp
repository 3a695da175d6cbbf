#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fsmix/tensor.hpp"

namespace fsmix::ad {

class Var;
using Vjp = std::function<std::vector<Var>(const Var&)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order; fixes the accumulation order
  std::vector<Var> parents;
  Vjp vjp;  // empty for leaves
};

// Handle to a node of the reverse-mode graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& val() const { return node_->value; }
  // In-place update of a leaf (optimizer step). Any graph built on the old
  // value must already be dead.
  Tensor& mutable_val() { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  Node* node() const { return node_.get(); }

  // Convenience for scalar-shaped Vars.
  double scalar() const;

 private:
  friend Var make_op(Tensor, std::vector<Var>, Vjp);
  std::shared_ptr<Node> node_;
};

// Recording flag. While off, ops produce detached leaves; vjp closures run
// under the off state when grads are not being built into a new graph.
bool grad_mode();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};
// Re-enables recording inside a NoGrad region (for losses that must build
// an inner graph, like gradient penalties).
struct EnableGradGuard {
  EnableGradGuard();
  ~EnableGradGuard();
  bool prev;
};

Var make_leaf(Tensor value, bool requires_grad = false);
Var make_op(Tensor value, std::vector<Var> parents, Vjp vjp);

// Reverse-mode gradients of `output` w.r.t. `inputs`, seeded with
// `grad_output` (defaults to ones). With create_graph the returned grads
// carry their own graph, so they can be differentiated again.
std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs,
                      const Var& grad_output = {}, bool create_graph = false);

}  // namespace fsmix::ad
