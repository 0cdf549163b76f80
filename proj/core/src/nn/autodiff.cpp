#include "rgbt/nn/autodiff.hpp"

#include <unordered_map>
#include <unordered_set>

#include "rgbt/nn/ops.hpp"

namespace rgbt::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_mode_enabled() { return g_grad_enabled; }

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad && g_grad_enabled;
}

Var Var::from_node(std::shared_ptr<Node> n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

const Tensor& Var::value() const { return node_->value; }
Tensor& Var::mutable_value() { return node_->value; }
bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var Var::detach() const {
  if (!node_) return Var();
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = node_->value;  // shares the buffer, not the graph
  v.node_->requires_grad = false;
  return v;
}

Var make_op(const char* name, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = name;
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      n->requires_grad = true;
      n->backward = std::move(backward);
      n->inputs.reserve(inputs.size());
      for (auto& in : inputs) n->inputs.push_back(in.node());
    }
  }
  return Var::from_node(std::move(n));
}

std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph,
                      Var grad_root) {
  if (!root.defined()) throw ShapeMismatchError("grad: undefined root");
  if (!grad_root.defined()) {
    if (root.value().size() != 1) {
      throw ShapeMismatchError("grad: non-scalar root requires an explicit grad_root");
    }
    grad_root = Var(Tensor::full(root.value().shape(), 1.0));
  }

  // Post-order over the requires_grad subgraph. The caller's root Var owns
  // the whole graph, so raw pointers stay valid throughout.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  if (root.requires_grad()) {
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    while (!stack.empty()) {
      auto [n, child] = stack.back();
      if (child == 0 && visited.count(n)) {
        stack.pop_back();
        continue;
      }
      bool descended = false;
      while (child < n->inputs.size()) {
        Node* c = n->inputs[child].get();
        ++child;
        if (c->requires_grad && !visited.count(c)) {
          stack.back().second = child;
          stack.emplace_back(c, 0);
          descended = true;
          break;
        }
      }
      if (descended) continue;
      visited.insert(n);
      order.push_back(n);
      stack.pop_back();
    }
  }

  // A node needs its gradient iff it can reach one of the wrt leaves.
  // Post-order puts inputs before consumers, so one sweep suffices.
  std::unordered_set<Node*> wanted;
  for (const auto& w : wrt) wanted.insert(w.node().get());
  std::unordered_set<Node*> reaches;
  for (Node* n : order) {
    bool r = wanted.count(n) > 0;
    for (auto& in : n->inputs) r = r || reaches.count(in.get()) > 0;
    if (r) reaches.insert(n);
  }

  std::unordered_map<Node*, Var> grads;
  grads[root.node().get()] = grad_root;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || !reaches.count(n)) continue;
    auto git = grads.find(n);
    if (git == grads.end()) continue;

    std::vector<Var> input_vars;
    std::vector<char> needs;
    input_vars.reserve(n->inputs.size());
    needs.reserve(n->inputs.size());
    for (auto& in : n->inputs) {
      input_vars.push_back(Var::from_node(in));
      needs.push_back(in->requires_grad && reaches.count(in.get()) ? 1 : 0);
    }
    std::vector<Var> input_grads = n->backward(input_vars, git->second, needs);
    for (size_t i = 0; i < n->inputs.size(); ++i) {
      if (!needs[i] || i >= input_grads.size() || !input_grads[i].defined()) continue;
      Node* target = n->inputs[i].get();
      auto acc = grads.find(target);
      if (acc == grads.end()) {
        grads[target] = input_grads[i];
      } else {
        acc->second = add(acc->second, input_grads[i]);
      }
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = grads.find(w.node().get());
    if (it == grads.end()) {
      out.emplace_back(Tensor::zeros(w.value().shape()));
    } else {
      out.push_back(create_graph ? it->second : it->second.detach());
    }
  }
  return out;
}

}  // namespace rgbt::nn
