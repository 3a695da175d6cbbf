#include "fsmix/autodiff.hpp"

#include <atomic>
#include <unordered_map>

#include "fsmix/ops.hpp"

namespace fsmix::ad {

namespace {
std::atomic<uint64_t> g_seq{0};
thread_local bool g_grad_mode = true;

struct GradModeGuard {
  bool prev;
  explicit GradModeGuard(bool on) : prev(g_grad_mode) { g_grad_mode = on; }
  ~GradModeGuard() { g_grad_mode = prev; }
};
}  // namespace

bool grad_mode() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : prev(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = prev; }

EnableGradGuard::EnableGradGuard() : prev(g_grad_mode) { g_grad_mode = true; }
EnableGradGuard::~EnableGradGuard() { g_grad_mode = prev; }

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
}

double Var::scalar() const {
  if (val().numel() != 1) throw ShapeError("Var::scalar: tensor is not scalar-shaped");
  return val()[0];
}

Var make_leaf(Tensor value, bool requires_grad) {
  return Var(std::move(value), requires_grad);
}

Var make_op(Tensor value, std::vector<Var> parents, Vjp vjp) {
  bool any = false;
  if (g_grad_mode)
    for (const Var& p : parents)
      if (p.defined() && p.requires_grad()) any = true;
  if (!any) return make_leaf(std::move(value), false);
  Var out(std::move(value), true);
  out.node_->parents = std::move(parents);
  out.node_->vjp = std::move(vjp);
  return out;
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs,
                      const Var& grad_output, bool create_graph) {
  if (!output.defined()) throw InvalidInputError("grad: undefined output");

  // Topological order over the requires_grad subgraph (iterative DFS;
  // the graph is a DAG, nodes stay alive through the output's parent chain).
  std::vector<Node*> topo;
  {
    std::unordered_map<Node*, bool> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(output.node(), 0);
    seen[output.node()] = true;
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        const Var& p = n->parents[idx++];
        if (p.defined() && p.requires_grad() && !seen[p.node()]) {
          seen[p.node()] = true;
          stack.emplace_back(p.node(), 0);
        }
      } else {
        topo.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<Node*, Var> grads;
  {
    Var seed = grad_output;
    if (!seed.defined()) seed = make_leaf(Tensor::full(output.val().shape(), 1.0), false);
    if (seed.val().shape() != output.val().shape())
      throw ShapeError("grad: grad_output shape mismatch");
    grads[output.node()] = seed;
  }

  {
    GradModeGuard mode(create_graph);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      Node* n = *it;
      auto git = grads.find(n);
      if (git == grads.end()) continue;  // not on a path from the output
      if (!n->vjp) continue;             // leaf
      std::vector<Var> pg = n->vjp(git->second);
      if (pg.size() != n->parents.size())
        throw InvalidInputError("grad: vjp arity mismatch");
      for (size_t i = 0; i < pg.size(); ++i) {
        const Var& p = n->parents[i];
        if (!p.defined() || !p.requires_grad() || !pg[i].defined()) continue;
        if (pg[i].val().shape() != p.val().shape())
          throw ShapeError("grad: vjp shape mismatch");
        auto slot = grads.find(p.node());
        if (slot == grads.end())
          grads[p.node()] = pg[i];
        else
          slot->second = add(slot->second, pg[i]);
      }
    }
  }

  std::vector<Var> out;
  out.reserve(inputs.size());
  for (const Var& in : inputs) {
    auto it = grads.find(in.node());
    if (it != grads.end())
      out.push_back(it->second);
    else
      out.push_back(make_leaf(Tensor::zeros(in.val().shape()), false));
  }
  return out;
}

}  // namespace fsmix::ad
