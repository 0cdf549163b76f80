// Differentiable tensor operations. Backward passes are built from these
// same ops (plus piecewise-constant masks emitted as detached tensors), so
// the set is closed under differentiation to any order.
#pragma once

#include <cstdint>
#include <vector>

#include "rgbt/nn/autodiff.hpp"

namespace rgbt::nn {

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var add_scalar(const Var& x, double c);
Var mul_scalar(const Var& x, double c);

Var neg(const Var& x);
Var abs(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var softplus(const Var& x);
/// sqrt(max(x, 0)); the derivative guard keeps gradients finite at 0.
Var sqrt0(const Var& x, double grad_guard = 1e-12);
Var clamp_min(const Var& x, double lo);
Var clamp(const Var& x, double lo, double hi);

// Reductions and broadcasts.
Var sum(const Var& x);                                  // -> {1}
Var mean(const Var& x);                                 // -> {1}
Var broadcast_scalar(const Var& s, std::vector<int64_t> shape);
Var sample_sum(const Var& x);                           // (N, ...) -> (N)
Var sample_mean(const Var& x);                          // (N, ...) -> (N)
Var sample_broadcast(const Var& v, std::vector<int64_t> shape);  // (N) -> (N, ...)

// Shaping.
Var reshape(const Var& x, std::vector<int64_t> shape);
Var concat_channels(const std::vector<Var>& xs);        // along dim 1
Var slice_channels(const Var& x, int64_t from, int64_t to);
Var pad_channels(const Var& x, int64_t from, int64_t total);
Var select_col(const Var& x, int64_t j);                // (N, M) -> (N)
Var col_embed(const Var& v, int64_t j, int64_t m);      // (N) -> (N, M)

// Dense linear algebra (rank 2).
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);
Var add_rowvec(const Var& x, const Var& b);             // (N, M) + (M)
Var col_sum(const Var& x);                              // (N, M) -> (M)
Var row_broadcast(const Var& v, int64_t n);             // (M) -> (N, M)

// Channel helpers on (N, C, H, W).
Var channel_mean(const Var& x);                         // -> (N, 1, H, W)
Var channel_sum(const Var& x);                          // -> (N, 1, H, W)
Var channel_broadcast(const Var& x, int64_t c);         // (N, 1, H, W) -> (N, C, H, W)
Var add_channel_bias(const Var& x, const Var& b);       // (N, C, H, W) + (C)
Var channel_bias_sum(const Var& x);                     // -> (C)
Var channel_bias_broadcast(const Var& b, int64_t n, int64_t h, int64_t w);

// Convolution. x: (N, Cin, H, W), w: (Cout, Cin, kh, kw), cross-correlation.
Var conv2d(const Var& x, const Var& w, int stride, int pad);
/// Gradient of conv2d w.r.t. its input: gy (N, Cout, Ho, Wo) -> (N, Cin, in_h, in_w).
Var conv2d_input_grad(const Var& gy, const Var& w, int stride, int pad, int64_t in_h,
                      int64_t in_w);
/// Gradient of conv2d w.r.t. its weights: -> (Cout, Cin, kh, kw).
Var conv2d_weight_grad(const Var& x, const Var& gy, int stride, int pad, int64_t kh, int64_t kw);

// Nearest-neighbour 2x upsample and its transpose (2x2 sum pooling).
Var upsample2(const Var& x);
Var sumpool2(const Var& x);

}  // namespace rgbt::nn
