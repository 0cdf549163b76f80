#include "rgbt/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

namespace rgbt::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void check(bool ok, const std::string& msg) {
  if (!ok) throw ShapeMismatchError(msg);
}

template <typename F>
Tensor unary_tensor(const Tensor& x, F f) {
  Tensor y(x.shape());
  const double* xd = x.data();
  double* yd = y.data();
  for (int64_t i = 0; i < x.size(); ++i) yd[i] = f(xd[i]);
  return y;
}

template <typename F>
Tensor binary_tensor(const Tensor& a, const Tensor& b, const char* name, F f) {
  check(a.shape() == b.shape(), std::string(name) + ": shape mismatch");
  Tensor y(a.shape());
  const double* ad = a.data();
  const double* bd = b.data();
  double* yd = y.data();
  for (int64_t i = 0; i < a.size(); ++i) yd[i] = f(ad[i], bd[i]);
  return y;
}

/// Piecewise-constant mask emitted as a detached leaf: correct a.e. for any
/// derivative order.
template <typename F>
Var mask_of(const Tensor& x, F f) {
  return Var(unary_tensor(x, f));
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  return make_op("add", binary_tensor(a.value(), b.value(), "add", [](double x, double y) { return x + y; }),
                 {a, b}, [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{g, g};
                 });
}

Var sub(const Var& a, const Var& b) {
  return make_op("sub", binary_tensor(a.value(), b.value(), "sub", [](double x, double y) { return x - y; }),
                 {a, b}, [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{g, neg(g)};
                 });
}

Var mul(const Var& a, const Var& b) {
  return make_op("mul", binary_tensor(a.value(), b.value(), "mul", [](double x, double y) { return x * y; }),
                 {a, b}, [](const std::vector<Var>& in, const Var& g, const std::vector<char>& needs) {
                   std::vector<Var> out(2);
                   if (needs[0]) out[0] = mul(g, in[1]);
                   if (needs[1]) out[1] = mul(g, in[0]);
                   return out;
                 });
}

Var div(const Var& a, const Var& b) {
  return make_op("div", binary_tensor(a.value(), b.value(), "div", [](double x, double y) { return x / y; }),
                 {a, b}, [](const std::vector<Var>& in, const Var& g, const std::vector<char>& needs) {
                   std::vector<Var> out(2);
                   if (needs[0]) out[0] = div(g, in[1]);
                   if (needs[1]) out[1] = neg(mul(g, div(in[0], mul(in[1], in[1]))));
                   return out;
                 });
}

Var add_scalar(const Var& x, double c) {
  return make_op("add_scalar", unary_tensor(x.value(), [c](double v) { return v + c; }), {x},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{g};
                 });
}

Var mul_scalar(const Var& x, double c) {
  return make_op("mul_scalar", unary_tensor(x.value(), [c](double v) { return v * c; }), {x},
                 [c](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{mul_scalar(g, c)};
                 });
}

Var neg(const Var& x) { return mul_scalar(x, -1.0); }

Var abs(const Var& x) {
  return make_op("abs", unary_tensor(x.value(), [](double v) { return std::fabs(v); }), {x},
                 [](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   Var s = mask_of(in[0].value(), [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
                   return std::vector<Var>{mul(g, s)};
                 });
}

Var exp(const Var& x) {
  return make_op("exp", unary_tensor(x.value(), [](double v) { return std::exp(v); }), {x},
                 [](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{mul(g, exp(in[0]))};
                 });
}

Var log(const Var& x) {
  return make_op("log", unary_tensor(x.value(), [](double v) { return std::log(v); }), {x},
                 [](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{div(g, in[0])};
                 });
}

Var tanh(const Var& x) {
  return make_op("tanh", unary_tensor(x.value(), [](double v) { return std::tanh(v); }), {x},
                 [](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   Var t = tanh(in[0]);
                   return std::vector<Var>{mul(g, add_scalar(neg(mul(t, t)), 1.0))};
                 });
}

Var sigmoid(const Var& x) {
  return make_op("sigmoid",
                 unary_tensor(x.value(), [](double v) { return 1.0 / (1.0 + std::exp(-v)); }), {x},
                 [](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   Var s = sigmoid(in[0]);
                   return std::vector<Var>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
                 });
}

Var relu(const Var& x) {
  return make_op("relu", unary_tensor(x.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {x},
                 [](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   Var m = mask_of(in[0].value(), [](double v) { return v > 0.0 ? 1.0 : 0.0; });
                   return std::vector<Var>{mul(g, m)};
                 });
}

Var softplus(const Var& x) {
  // log(1 + e^x), computed as max(x, 0) + log1p(e^{-|x|}) for stability.
  return make_op("softplus",
                 unary_tensor(x.value(),
                              [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); }),
                 {x}, [](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{mul(g, sigmoid(in[0]))};
                 });
}

Var sqrt0(const Var& x, double grad_guard) {
  return make_op("sqrt0",
                 unary_tensor(x.value(), [](double v) { return std::sqrt(std::max(v, 0.0)); }), {x},
                 [grad_guard](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   Var root = clamp_min(sqrt0(in[0], grad_guard), grad_guard);
                   return std::vector<Var>{div(mul_scalar(g, 0.5), root)};
                 });
}

Var clamp_min(const Var& x, double lo) {
  return make_op("clamp_min", unary_tensor(x.value(), [lo](double v) { return std::max(v, lo); }),
                 {x}, [lo](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   Var m = mask_of(in[0].value(), [lo](double v) { return v >= lo ? 1.0 : 0.0; });
                   return std::vector<Var>{mul(g, m)};
                 });
}

Var clamp(const Var& x, double lo, double hi) {
  return make_op("clamp",
                 unary_tensor(x.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); }), {x},
                 [lo, hi](const std::vector<Var>& in, const Var& g, const std::vector<char>&) {
                   Var m = mask_of(in[0].value(),
                                   [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
                   return std::vector<Var>{mul(g, m)};
                 });
}

// ---------------------------------------------------------------------------
// Reductions / broadcasts

Var sum(const Var& x) {
  double acc = 0.0;
  const double* d = x.value().data();
  for (int64_t i = 0; i < x.value().size(); ++i) acc += d[i];
  std::vector<int64_t> shape = x.value().shape();
  return make_op("sum", Tensor::scalar(acc), {x},
                 [shape](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{broadcast_scalar(g, shape)};
                 });
}

Var mean(const Var& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var broadcast_scalar(const Var& s, std::vector<int64_t> shape) {
  check(s.value().size() == 1, "broadcast_scalar: source must be scalar");
  return make_op("broadcast_scalar", Tensor::full(shape, s.value().item()), {s},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{sum(g)};
                 });
}

Var sample_sum(const Var& x) {
  check(x.value().rank() >= 1, "sample_sum: rank must be >= 1");
  int64_t n = x.value().dim(0);
  int64_t k = x.value().size() / n;
  Tensor y({n});
  const double* xd = x.value().data();
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < k; ++j) acc += xd[i * k + j];
    y[i] = acc;
  }
  std::vector<int64_t> shape = x.value().shape();
  return make_op("sample_sum", std::move(y), {x},
                 [shape](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{sample_broadcast(g, shape)};
                 });
}

Var sample_mean(const Var& x) {
  int64_t k = x.value().size() / x.value().dim(0);
  return mul_scalar(sample_sum(x), 1.0 / static_cast<double>(k));
}

Var sample_broadcast(const Var& v, std::vector<int64_t> shape) {
  check(v.value().rank() == 1 && v.value().dim(0) == shape.at(0),
        "sample_broadcast: leading dims must match");
  int64_t n = shape[0];
  int64_t k = Tensor::count(shape) / n;
  Tensor y(shape);
  double* yd = y.data();
  const double* vd = v.value().data();
  for (int64_t i = 0; i < n; ++i) std::fill(yd + i * k, yd + (i + 1) * k, vd[i]);
  return make_op("sample_broadcast", std::move(y), {v},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{sample_sum(g)};
                 });
}

// ---------------------------------------------------------------------------
// Shaping

Var reshape(const Var& x, std::vector<int64_t> shape) {
  std::vector<int64_t> orig = x.value().shape();
  return make_op("reshape", x.value().reshaped(std::move(shape)), {x},
                 [orig](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{reshape(g, orig)};
                 });
}

namespace {
// Shared layout logic for dim-1 concat/slice on rank-2 or rank-4 tensors.
struct ChannelLayout {
  int64_t n;        // leading dim
  int64_t c;        // channel dim
  int64_t inner;    // product of trailing dims
};

ChannelLayout channel_layout(const Tensor& t, const char* name) {
  check(t.rank() == 2 || t.rank() == 4, std::string(name) + ": rank must be 2 or 4");
  ChannelLayout l{t.dim(0), t.dim(1), 1};
  for (int i = 2; i < t.rank(); ++i) l.inner *= t.dim(i);
  return l;
}
}  // namespace

Var concat_channels(const std::vector<Var>& xs) {
  check(!xs.empty(), "concat_channels: empty input");
  ChannelLayout base = channel_layout(xs[0].value(), "concat_channels");
  int64_t total_c = 0;
  for (const auto& x : xs) {
    ChannelLayout l = channel_layout(x.value(), "concat_channels");
    check(l.n == base.n && l.inner == base.inner, "concat_channels: incompatible shapes");
    total_c += l.c;
  }
  std::vector<int64_t> shape = xs[0].value().shape();
  shape[1] = total_c;
  Tensor y(shape);
  double* yd = y.data();
  int64_t off = 0;
  std::vector<int64_t> offsets;
  for (const auto& x : xs) {
    ChannelLayout l = channel_layout(x.value(), "concat_channels");
    const double* xd = x.value().data();
    for (int64_t i = 0; i < l.n; ++i) {
      std::copy(xd + i * l.c * l.inner, xd + (i + 1) * l.c * l.inner,
                yd + (i * total_c + off) * base.inner);
    }
    offsets.push_back(off);
    off += l.c;
  }
  std::vector<int64_t> channels;
  for (const auto& x : xs) channels.push_back(x.value().dim(1));
  return make_op("concat_channels", std::move(y), xs,
                 [offsets, channels](const std::vector<Var>&, const Var& g, const std::vector<char>& needs) {
                   std::vector<Var> out(offsets.size());
                   for (size_t i = 0; i < offsets.size(); ++i) {
                     if (needs[i]) out[i] = slice_channels(g, offsets[i], offsets[i] + channels[i]);
                   }
                   return out;
                 });
}

Var slice_channels(const Var& x, int64_t from, int64_t to) {
  ChannelLayout l = channel_layout(x.value(), "slice_channels");
  check(0 <= from && from < to && to <= l.c, "slice_channels: bad range");
  std::vector<int64_t> shape = x.value().shape();
  shape[1] = to - from;
  Tensor y(shape);
  const double* xd = x.value().data();
  double* yd = y.data();
  for (int64_t i = 0; i < l.n; ++i) {
    std::copy(xd + (i * l.c + from) * l.inner, xd + (i * l.c + to) * l.inner,
              yd + i * (to - from) * l.inner);
  }
  int64_t total = l.c;
  return make_op("slice_channels", std::move(y), {x},
                 [from, total](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{pad_channels(g, from, total)};
                 });
}

Var pad_channels(const Var& x, int64_t from, int64_t total) {
  ChannelLayout l = channel_layout(x.value(), "pad_channels");
  check(from >= 0 && from + l.c <= total, "pad_channels: bad range");
  std::vector<int64_t> shape = x.value().shape();
  shape[1] = total;
  Tensor y(shape);  // zero-filled
  const double* xd = x.value().data();
  double* yd = y.data();
  for (int64_t i = 0; i < l.n; ++i) {
    std::copy(xd + i * l.c * l.inner, xd + (i + 1) * l.c * l.inner,
              yd + (i * total + from) * l.inner);
  }
  int64_t c = l.c;
  return make_op("pad_channels", std::move(y), {x},
                 [from, c](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{slice_channels(g, from, from + c)};
                 });
}

Var select_col(const Var& x, int64_t j) {
  check(x.value().rank() == 2, "select_col: rank must be 2");
  int64_t n = x.value().dim(0), m = x.value().dim(1);
  check(0 <= j && j < m, "select_col: column out of range");
  Tensor y({n});
  for (int64_t i = 0; i < n; ++i) y[i] = x.value()[i * m + j];
  return make_op("select_col", std::move(y), {x},
                 [j, m](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{col_embed(g, j, m)};
                 });
}

Var col_embed(const Var& v, int64_t j, int64_t m) {
  check(v.value().rank() == 1, "col_embed: rank must be 1");
  int64_t n = v.value().dim(0);
  Tensor y({n, m});
  for (int64_t i = 0; i < n; ++i) y[i * m + j] = v.value()[i];
  return make_op("col_embed", std::move(y), {v},
                 [j](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{select_col(g, j)};
                 });
}

// ---------------------------------------------------------------------------
// Dense linear algebra

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0), "matmul: shape mismatch");
  Tensor y({av.dim(0), bv.dim(1)});
  ConstMatMap am(av.data(), av.dim(0), av.dim(1));
  ConstMatMap bm(bv.data(), bv.dim(0), bv.dim(1));
  MatMap ym(y.data(), av.dim(0), bv.dim(1));
  ym.noalias() = am * bm;
  return make_op("matmul", std::move(y), {a, b},
                 [](const std::vector<Var>& in, const Var& g, const std::vector<char>& needs) {
                   std::vector<Var> out(2);
                   if (needs[0]) out[0] = matmul(g, transpose(in[1]));
                   if (needs[1]) out[1] = matmul(transpose(in[0]), g);
                   return out;
                 });
}

Var transpose(const Var& x) {
  const Tensor& xv = x.value();
  check(xv.rank() == 2, "transpose: rank must be 2");
  Tensor y({xv.dim(1), xv.dim(0)});
  ConstMatMap xm(xv.data(), xv.dim(0), xv.dim(1));
  MatMap ym(y.data(), xv.dim(1), xv.dim(0));
  ym = xm.transpose();
  return make_op("transpose", std::move(y), {x},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{transpose(g)};
                 });
}

Var add_rowvec(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  check(xv.rank() == 2 && bv.rank() == 1 && xv.dim(1) == bv.dim(0), "add_rowvec: shape mismatch");
  Tensor y(xv.shape());
  int64_t n = xv.dim(0), m = xv.dim(1);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) y[i * m + j] = xv[i * m + j] + bv[j];
  return make_op("add_rowvec", std::move(y), {x, b},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>& needs) {
                   std::vector<Var> out(2);
                   if (needs[0]) out[0] = g;
                   if (needs[1]) out[1] = col_sum(g);
                   return out;
                 });
}

Var col_sum(const Var& x) {
  const Tensor& xv = x.value();
  check(xv.rank() == 2, "col_sum: rank must be 2");
  int64_t n = xv.dim(0), m = xv.dim(1);
  Tensor y({m});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) y[j] += xv[i * m + j];
  return make_op("col_sum", std::move(y), {x},
                 [n](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{row_broadcast(g, n)};
                 });
}

Var row_broadcast(const Var& v, int64_t n) {
  const Tensor& vv = v.value();
  check(vv.rank() == 1, "row_broadcast: rank must be 1");
  int64_t m = vv.dim(0);
  Tensor y({n, m});
  for (int64_t i = 0; i < n; ++i) std::copy(vv.data(), vv.data() + m, y.data() + i * m);
  return make_op("row_broadcast", std::move(y), {v},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{col_sum(g)};
                 });
}

// ---------------------------------------------------------------------------
// Channel helpers

Var channel_sum(const Var& x) {
  const Tensor& xv = x.value();
  check(xv.rank() == 4, "channel_sum: rank must be 4");
  int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor y({n, 1, xv.dim(2), xv.dim(3)});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* src = xv.data() + (i * c + ch) * hw;
      double* dst = y.data() + i * hw;
      for (int64_t p = 0; p < hw; ++p) dst[p] += src[p];
    }
  int64_t channels = c;
  return make_op("channel_sum", std::move(y), {x},
                 [channels](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{channel_broadcast(g, channels)};
                 });
}

Var channel_mean(const Var& x) {
  return mul_scalar(channel_sum(x), 1.0 / static_cast<double>(x.value().dim(1)));
}

Var channel_broadcast(const Var& x, int64_t c) {
  const Tensor& xv = x.value();
  check(xv.rank() == 4 && xv.dim(1) == 1, "channel_broadcast: input must be (N,1,H,W)");
  int64_t n = xv.dim(0), hw = xv.dim(2) * xv.dim(3);
  Tensor y({n, c, xv.dim(2), xv.dim(3)});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      std::copy(xv.data() + i * hw, xv.data() + (i + 1) * hw, y.data() + (i * c + ch) * hw);
    }
  return make_op("channel_broadcast", std::move(y), {x},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{channel_sum(g)};
                 });
}

Var add_channel_bias(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  check(xv.rank() == 4 && bv.rank() == 1 && bv.dim(0) == xv.dim(1),
        "add_channel_bias: shape mismatch");
  int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor y(xv.shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* src = xv.data() + (i * c + ch) * hw;
      double* dst = y.data() + (i * c + ch) * hw;
      double bias = bv[ch];
      for (int64_t p = 0; p < hw; ++p) dst[p] = src[p] + bias;
    }
  return make_op("add_channel_bias", std::move(y), {x, b},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>& needs) {
                   std::vector<Var> out(2);
                   if (needs[0]) out[0] = g;
                   if (needs[1]) out[1] = channel_bias_sum(g);
                   return out;
                 });
}

Var channel_bias_sum(const Var& x) {
  const Tensor& xv = x.value();
  check(xv.rank() == 4, "channel_bias_sum: rank must be 4");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor y({c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* src = xv.data() + (i * c + ch) * h * w;
      double acc = 0.0;
      for (int64_t p = 0; p < h * w; ++p) acc += src[p];
      y[ch] += acc;
    }
  return make_op("channel_bias_sum", std::move(y), {x},
                 [n, h, w](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{channel_bias_broadcast(g, n, h, w)};
                 });
}

Var channel_bias_broadcast(const Var& b, int64_t n, int64_t h, int64_t w) {
  const Tensor& bv = b.value();
  check(bv.rank() == 1, "channel_bias_broadcast: rank must be 1");
  int64_t c = bv.dim(0);
  Tensor y({n, c, h, w});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      double* dst = y.data() + (i * c + ch) * h * w;
      std::fill(dst, dst + h * w, bv[ch]);
    }
  return make_op("channel_bias_broadcast", std::move(y), {b},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{channel_bias_sum(g)};
                 });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

int64_t conv_out_dim(int64_t in, int64_t k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// cols: (C*kh*kw) x (Ho*Wo), row-major.
void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int stride,
            int pad, int64_t Ho, int64_t Wo, double* cols) {
  for (int64_t c = 0; c < C; ++c) {
    const double* xc = x + c * H * W;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        double* row = cols + ((c * kh + ki) * kw + kj) * Ho * Wo;
        for (int64_t oi = 0; oi < Ho; ++oi) {
          int64_t ii = oi * stride + ki - pad;
          double* dst = row + oi * Wo;
          if (ii < 0 || ii >= H) {
            std::fill(dst, dst + Wo, 0.0);
            continue;
          }
          const double* xr = xc + ii * W;
          for (int64_t oj = 0; oj < Wo; ++oj) {
            int64_t jj = oj * stride + kj - pad;
            dst[oj] = (jj >= 0 && jj < W) ? xr[jj] : 0.0;
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-add cols back into the image.
void col2im_add(const double* cols, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int stride, int pad, int64_t Ho, int64_t Wo, double* x) {
  for (int64_t c = 0; c < C; ++c) {
    double* xc = x + c * H * W;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        const double* row = cols + ((c * kh + ki) * kw + kj) * Ho * Wo;
        for (int64_t oi = 0; oi < Ho; ++oi) {
          int64_t ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= H) continue;
          double* xr = xc + ii * W;
          const double* src = row + oi * Wo;
          for (int64_t oj = 0; oj < Wo; ++oj) {
            int64_t jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < W) xr[jj] += src[oj];
          }
        }
      }
    }
  }
}

struct ConvDims {
  int64_t n, cin, h, w;       // input
  int64_t cout, kh, kw;       // kernel
  int64_t ho, wo;             // output
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  check(x.rank() == 4 && w.rank() == 4, "conv2d: x and w must be rank 4");
  check(x.dim(1) == w.dim(1), "conv2d: channel mismatch");
  check(stride >= 1, "conv2d: stride must be >= 1");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0};
  d.ho = conv_out_dim(d.h, d.kh, stride, pad);
  d.wo = conv_out_dim(d.w, d.kw, stride, pad);
  check(d.ho >= 1 && d.wo >= 1, "conv2d: kernel larger than padded input");
  return d;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, int stride, int pad) {
  ConvDims d = conv_dims(x.value(), w.value(), stride, pad);
  int64_t K = d.cin * d.kh * d.kw;
  int64_t P = d.ho * d.wo;
  Tensor y({d.n, d.cout, d.ho, d.wo});
  std::vector<double> cols(K * P);
  ConstMatMap wm(w.value().data(), d.cout, K);
  for (int64_t n = 0; n < d.n; ++n) {
    im2col(x.value().data() + n * d.cin * d.h * d.w, d.cin, d.h, d.w, d.kh, d.kw, stride, pad,
           d.ho, d.wo, cols.data());
    ConstMatMap cm(cols.data(), K, P);
    MatMap ym(y.data() + n * d.cout * P, d.cout, P);
    ym.noalias() = wm * cm;
  }
  int64_t in_h = d.h, in_w = d.w, kh = d.kh, kw = d.kw;
  return make_op("conv2d", std::move(y), {x, w},
                 [stride, pad, in_h, in_w, kh, kw](const std::vector<Var>& in, const Var& g,
                                                   const std::vector<char>& needs) {
                   std::vector<Var> out(2);
                   if (needs[0]) out[0] = conv2d_input_grad(g, in[1], stride, pad, in_h, in_w);
                   if (needs[1]) out[1] = conv2d_weight_grad(in[0], g, stride, pad, kh, kw);
                   return out;
                 });
}

Var conv2d_input_grad(const Var& gy, const Var& w, int stride, int pad, int64_t in_h,
                      int64_t in_w) {
  const Tensor& gv = gy.value();
  const Tensor& wv = w.value();
  check(gv.rank() == 4 && wv.rank() == 4, "conv2d_input_grad: rank must be 4");
  check(gv.dim(1) == wv.dim(0), "conv2d_input_grad: channel mismatch");
  int64_t cin = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  check(conv_out_dim(in_h, kh, stride, pad) == gv.dim(2) &&
            conv_out_dim(in_w, kw, stride, pad) == gv.dim(3),
        "conv2d_input_grad: output dims inconsistent with in_h/in_w");
  int64_t n = gv.dim(0), cout = gv.dim(1), ho = gv.dim(2), wo = gv.dim(3);
  int64_t K = cin * kh * kw;
  int64_t P = ho * wo;
  Tensor gx({n, cin, in_h, in_w});
  std::vector<double> cols(K * P);
  ConstMatMap wm(wv.data(), cout, K);
  for (int64_t i = 0; i < n; ++i) {
    ConstMatMap gm(gv.data() + i * cout * P, cout, P);
    MatMap cm(cols.data(), K, P);
    cm.noalias() = wm.transpose() * gm;
    col2im_add(cols.data(), cin, in_h, in_w, kh, kw, stride, pad, ho, wo,
               gx.data() + i * cin * in_h * in_w);
  }
  return make_op("conv2d_input_grad", std::move(gx), {gy, w},
                 [stride, pad](const std::vector<Var>& in, const Var& u,
                               const std::vector<char>& needs) {
                   // z = conv_input_grad(g, w) is bilinear: d/dg is the
                   // forward conv of the upstream, d/dw correlates upstream
                   // with g.
                   std::vector<Var> out(2);
                   const Tensor& wv = in[1].value();
                   if (needs[0]) out[0] = conv2d(u, in[1], stride, pad);
                   if (needs[1])
                     out[1] = conv2d_weight_grad(u, in[0], stride, pad, wv.dim(2), wv.dim(3));
                   return out;
                 });
}

Var conv2d_weight_grad(const Var& x, const Var& gy, int stride, int pad, int64_t kh, int64_t kw) {
  const Tensor& xv = x.value();
  const Tensor& gv = gy.value();
  check(xv.rank() == 4 && gv.rank() == 4, "conv2d_weight_grad: rank must be 4");
  check(xv.dim(0) == gv.dim(0), "conv2d_weight_grad: batch mismatch");
  check(conv_out_dim(xv.dim(2), kh, stride, pad) == gv.dim(2) &&
            conv_out_dim(xv.dim(3), kw, stride, pad) == gv.dim(3),
        "conv2d_weight_grad: dims inconsistent");
  int64_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w_ = xv.dim(3);
  int64_t cout = gv.dim(1), ho = gv.dim(2), wo = gv.dim(3);
  int64_t K = cin * kh * kw;
  int64_t P = ho * wo;
  Tensor gw({cout, cin, kh, kw});
  std::vector<double> cols(K * P);
  MatMap gwm(gw.data(), cout, K);
  for (int64_t i = 0; i < n; ++i) {
    im2col(xv.data() + i * cin * h * w_, cin, h, w_, kh, kw, stride, pad, ho, wo, cols.data());
    ConstMatMap cm(cols.data(), K, P);
    ConstMatMap gm(gv.data() + i * cout * P, cout, P);
    gwm.noalias() += gm * cm.transpose();
  }
  int64_t in_h = h, in_w = w_;
  return make_op("conv2d_weight_grad", std::move(gw), {x, gy},
                 [stride, pad, in_h, in_w](const std::vector<Var>& in, const Var& u,
                                           const std::vector<char>& needs) {
                   std::vector<Var> out(2);
                   if (needs[0]) out[0] = conv2d_input_grad(in[1], u, stride, pad, in_h, in_w);
                   if (needs[1]) out[1] = conv2d(in[0], u, stride, pad);
                   return out;
                 });
}

// ---------------------------------------------------------------------------
// Resampling

Var upsample2(const Var& x) {
  const Tensor& xv = x.value();
  check(xv.rank() == 4, "upsample2: rank must be 4");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor y({n, c, h * 2, w * 2});
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const double* src = xv.data() + nc * h * w;
    double* dst = y.data() + nc * 4 * h * w;
    for (int64_t i = 0; i < 2 * h; ++i)
      for (int64_t j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
  }
  return make_op("upsample2", std::move(y), {x},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{sumpool2(g)};
                 });
}

Var sumpool2(const Var& x) {
  const Tensor& xv = x.value();
  check(xv.rank() == 4, "sumpool2: rank must be 4");
  check(xv.dim(2) % 2 == 0 && xv.dim(3) % 2 == 0, "sumpool2: spatial dims must be even");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2) / 2, w = xv.dim(3) / 2;
  Tensor y({n, c, h, w});
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const double* src = xv.data() + nc * 4 * h * w;
    double* dst = y.data() + nc * h * w;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        dst[i * w + j] = src[(2 * i) * 2 * w + 2 * j] + src[(2 * i) * 2 * w + 2 * j + 1] +
                         src[(2 * i + 1) * 2 * w + 2 * j] + src[(2 * i + 1) * 2 * w + 2 * j + 1];
      }
  }
  return make_op("sumpool2", std::move(y), {x},
                 [](const std::vector<Var>&, const Var& g, const std::vector<char>&) {
                   return std::vector<Var>{upsample2(g)};
                 });
}

}  // namespace rgbt::nn
