#include "rgbt/nn/optim.hpp"

#include <cmath>

namespace rgbt::nn {

Adagrad::Adagrad(std::vector<Var> params, double lr, double eps)
    : params_(std::move(params)), lr_(lr), eps_(eps) {
  accum_.reserve(params_.size());
  for (const auto& p : params_) accum_.push_back(Tensor::zeros(p.value().shape()));
}

void Adagrad::step(const std::vector<Var>& grads) {
  if (grads.size() != params_.size()) {
    throw ShapeMismatchError("Adagrad::step: gradient count mismatch");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!grads[i].defined()) continue;
    const Tensor& g = grads[i].value();
    Tensor& p = params_[i].mutable_value();
    Tensor& a = accum_[i];
    if (!g.same_shape(p)) throw ShapeMismatchError("Adagrad::step: gradient shape mismatch");
    for (int64_t k = 0; k < p.size(); ++k) {
      double gv = g[k];
      a[k] += gv * gv;
      p[k] -= lr_ * gv / (std::sqrt(a[k]) + eps_);
    }
  }
}

void init_glorot(Tensor& w, int64_t fan_in, int64_t fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-a, a);
}

}  // namespace rgbt::nn
