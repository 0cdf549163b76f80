// Reverse-mode automatic differentiation on Tensors.
//
// Every op's backward pass is expressed through the same differentiable op
// set, so grad() with create_graph=true yields gradients that can be
// differentiated again. The attention regularizers rely on this: attention
// maps are input gradients, and the training loss differentiates through
// them a second time.
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rgbt/nn/tensor.hpp"

namespace rgbt::nn {

struct Node;

/// Value-semantic handle to a graph node.
class Var {
 public:
  Var() = default;
  /// Leaf node. requires_grad marks it as a differentiation target.
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  Tensor& mutable_value();  // leaf parameter updates only
  bool requires_grad() const;
  const std::vector<int64_t>& shape() const { return value().shape(); }

  /// Same value, cut loose from the graph.
  Var detach() const;

  std::shared_ptr<Node> node() const { return node_; }
  static Var from_node(std::shared_ptr<Node> n);

 private:
  std::shared_ptr<Node> node_;
};

/// Computes gradients for each input given the gradient at the output.
/// needs[i] is false when input i's gradient will be discarded; expensive
/// ops may then return an undefined Var in that slot.
using BackwardFn = std::function<std::vector<Var>(
    const std::vector<Var>& inputs, const Var& grad_out, const std::vector<char>& needs)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;  // null for leaves
  const char* op = "leaf";
};

/// Builds a graph node. requires_grad is inherited from the inputs. When
/// autodiff is disabled (NoGradGuard), the result is a detached leaf.
Var make_op(const char* name, Tensor value, std::vector<Var> inputs, BackwardFn backward);

/// d(root)/d(wrt). root must be scalar unless grad_root is supplied.
/// Unreachable wrt entries get zero gradients. With create_graph=true the
/// returned Vars stay connected so they can be differentiated again.
std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph = false,
                      Var grad_root = {});

/// RAII guard: ops executed while alive do not record the graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_mode_enabled();

}  // namespace rgbt::nn
