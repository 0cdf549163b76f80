// Adagrad optimizer and weight initialization.
#pragma once

#include <cstdint>
#include <vector>

#include "rgbt/nn/autodiff.hpp"
#include "rgbt/random.hpp"

namespace rgbt::nn {

/// Per-parameter adaptive step: theta -= lr * g / (sqrt(sum g^2) + eps).
class Adagrad {
 public:
  explicit Adagrad(std::vector<Var> params, double lr, double eps = 1e-10);

  /// grads[i] pairs with params[i]; undefined entries are skipped.
  void step(const std::vector<Var>& grads);

  const std::vector<Var>& params() const { return params_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> accum_;
  double lr_;
  double eps_;
};

/// Uniform Glorot initialization: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
void init_glorot(Tensor& w, int64_t fan_in, int64_t fan_out, Rng& rng);

}  // namespace rgbt::nn
