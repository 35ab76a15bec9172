// Copyright 2026 The facefill Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "facefill/autograd.hpp"
#include "facefill/kernels.hpp"

// Differentiable operations. Every backward rule is written in terms of these
// same operations, so gradients can be differentiated again when requested.
namespace facefill {

template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t));
}

template <typename T>
Var<T> sum_to(const Var<T>& x, const Shape& target);
template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& target);

template <typename T>
Var<T> sum_to(const Var<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  const Shape src = x.shape();
  return Var<T>::make(
      facefill::sum_to(x.value(), target), {x},
      [src](const Var<T>& g) { return std::vector<Var<T>>{broadcast_to(g, src)}; },
      "sum_to");
}

template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  const Shape src = x.shape();
  return Var<T>::make(
      facefill::broadcast_to(x.value(), target), {x},
      [src](const Var<T>& g) { return std::vector<Var<T>>{sum_to(g, src)}; },
      "broadcast_to");
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  return Var<T>::make(
      zip(a.value(), b.value(), [](T x, T y) { return x + y; }), {a, b},
      [sa, sb](const Var<T>& g) {
        return std::vector<Var<T>>{sum_to(g, sa), sum_to(g, sb)};
      },
      "add");
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return Var<T>::make(
      map(a.value(), [](T x) { return -x; }), {a},
      [](const Var<T>& g) { return std::vector<Var<T>>{neg(g)}; }, "neg");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  return Var<T>::make(
      zip(a.value(), b.value(), [](T x, T y) { return x - y; }), {a, b},
      [sa, sb](const Var<T>& g) {
        return std::vector<Var<T>>{sum_to(g, sa), neg(sum_to(g, sb))};
      },
      "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  return Var<T>::make(
      zip(a.value(), b.value(), [](T x, T y) { return x * y; }), {a, b},
      [a, b, sa, sb](const Var<T>& g) {
        return std::vector<Var<T>>{
            a.requires_grad() ? sum_to(mul(g, b), sa) : Var<T>(),
            b.requires_grad() ? sum_to(mul(g, a), sb) : Var<T>()};
      },
      "mul");
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  return Var<T>::make(
      zip(a.value(), b.value(), [](T x, T y) { return x / y; }), {a, b},
      [a, b, sa, sb](const Var<T>& g) {
        return std::vector<Var<T>>{
            a.requires_grad() ? sum_to(div(g, b), sa) : Var<T>(),
            b.requires_grad() ? neg(sum_to(div(mul(g, a), mul(b, b)), sb)) : Var<T>()};
      },
      "div");
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return Var<T>::make(
      map(a.value(), [s](T x) { return x * s; }), {a},
      [s](const Var<T>& g) { return std::vector<Var<T>>{scale(g, s)}; }, "scale");
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return Var<T>::make(
      map(a.value(), [s](T x) { return x + s; }), {a},
      [](const Var<T>& g) { return std::vector<Var<T>>{g}; }, "add_scalar");
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return Var<T>::make(
      map(a.value(), [](T x) { return x * x; }), {a},
      [a](const Var<T>& g) { return std::vector<Var<T>>{mul(g, scale(a, T(2)))}; },
      "square");
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
  return Var<T>::make(
      map(a.value(), [](T x) { return std::sqrt(x); }), {a},
      [a](const Var<T>& g) {
        return std::vector<Var<T>>{div(g, scale(sqrt(a), T(2)))};
      },
      "sqrt");
}

template <typename T>
Var<T> pow(const Var<T>& a, T p) {
  return Var<T>::make(
      map(a.value(), [p](T x) { return std::pow(x, p); }), {a},
      [a, p](const Var<T>& g) {
        return std::vector<Var<T>>{mul(g, scale(pow(a, p - T(1)), p))};
      },
      "pow");
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return Var<T>::make(
      map(a.value(), [](T x) { return std::exp(x); }), {a},
      [a](const Var<T>& g) { return std::vector<Var<T>>{mul(g, exp(a))}; }, "exp");
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return Var<T>::make(
      map(a.value(), [](T x) { return std::log(x); }), {a},
      [a](const Var<T>& g) { return std::vector<Var<T>>{div(g, a)}; }, "log");
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return Var<T>::make(
      map(a.value(),
          [](T x) {
            return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
          }),
      {a},
      [a](const Var<T>& g) {
        const Var<T> s = sigmoid(a);
        return std::vector<Var<T>>{mul(g, mul(s, add_scalar(neg(s), T(1))))};
      },
      "sigmoid");
}

/// log(1 + e^x), stable for large |x|.
template <typename T>
Var<T> softplus(const Var<T>& a) {
  return Var<T>::make(
      map(a.value(),
          [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); }),
      {a}, [a](const Var<T>& g) { return std::vector<Var<T>>{mul(g, sigmoid(a))}; },
      "softplus");
}

/// gain * (x > 0 ? x : slope * x)
template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.2), T gain = T(1)) {
  return Var<T>::make(
      map(a.value(), [=](T x) { return gain * (x > 0 ? x : slope * x); }), {a},
      [a, slope, gain](const Var<T>& g) {
        Tensor<T> d = map(a.value(), [=](T x) { return gain * (x > 0 ? T(1) : slope); });
        return std::vector<Var<T>>{mul(g, constant(std::move(d)))};
      },
      "leaky_relu");
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
  const Shape src = a.shape();
  return Var<T>::make(
      a.value().reshaped(std::move(s)), {a},
      [src](const Var<T>& g) { return std::vector<Var<T>>{reshape(g, src)}; },
      "reshape");
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().vec()) acc += v;
  const Shape src = a.shape();
  return Var<T>::make(
      Tensor<T>::scalar(acc), {a},
      [src](const Var<T>& g) { return std::vector<Var<T>>{broadcast_to(g, src)}; },
      "sum");
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

/// Sums over `axes`, keeping them as size-1 dimensions.
template <typename T>
Var<T> sum_axes(const Var<T>& a, const std::vector<std::size_t>& axes) {
  Shape target = a.shape();
  for (auto ax : axes) {
    if (ax >= target.size()) throw ParameterError("sum_axes: axis out of range");
    target[ax] = 1;
  }
  return sum_to(a, target);
}

template <typename T>
Var<T> mean_axes(const Var<T>& a, const std::vector<std::size_t>& axes) {
  std::int64_t count = 1;
  for (auto ax : axes) count *= a.shape().at(ax);
  return scale(sum_axes(a, axes), T(1) / static_cast<T>(count));
}

/// Euclidean norm over `axes` (kept as size-1). The gradient at a zero vector
/// is taken as zero.
template <typename T>
Var<T> norm_axes(const Var<T>& a, const std::vector<std::size_t>& axes) {
  Shape target = a.shape();
  for (auto ax : axes) {
    if (ax >= target.size()) throw ParameterError("norm_axes: axis out of range");
    target[ax] = 1;
  }
  Tensor<T> n = facefill::sum_to(map(a.value(), [](T v) { return v * v; }), target);
  n = map(n, [](T v) { return std::sqrt(v); });
  return Var<T>::make(
      std::move(n), {a},
      [a, axes](const Var<T>& g) {
        const Var<T> n2 = norm_axes(a, axes);
        const Var<T> guard =
            constant(map(n2.value(), [](T v) { return v == T(0) ? T(1) : T(0); }));
        return std::vector<Var<T>>{
            mul(broadcast_to(g, a.shape()), div(a, add(n2, guard)))};
      },
      "norm");
}

/// Slice [start, start+len) along `axis`.
template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::int64_t start, std::int64_t len);

/// Inverse of slice: places `a` at [start, start+len) of a zero tensor whose
/// `axis` has size `full`.
template <typename T>
Var<T> embed(const Var<T>& a, std::size_t axis, std::int64_t start, std::int64_t full) {
  const Shape& s = a.shape();
  Shape out_shape = s;
  out_shape[axis] = full;
  Tensor<T> out(out_shape);
  const std::int64_t outer = numel_of(Shape(s.begin(), s.begin() + axis));
  const std::int64_t inner = numel_of(Shape(s.begin() + axis + 1, s.end()));
  const std::int64_t len = s[axis];
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(a.value().data() + o * len * inner, len * inner,
                out.data() + (o * full + start) * inner);
  return Var<T>::make(
      std::move(out), {a},
      [axis, start, len](const Var<T>& g) {
        return std::vector<Var<T>>{slice(g, axis, start, len)};
      },
      "embed");
}

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::int64_t start, std::int64_t len) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start < 0 || len < 0 || start + len > s[axis])
    throw ParameterError("slice out of range on shape " + to_string(s));
  Shape out_shape = s;
  out_shape[axis] = len;
  Tensor<T> out(out_shape);
  const std::int64_t outer = numel_of(Shape(s.begin(), s.begin() + axis));
  const std::int64_t inner = numel_of(Shape(s.begin() + axis + 1, s.end()));
  const std::int64_t full = s[axis];
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(a.value().data() + (o * full + start) * inner, len * inner,
                out.data() + o * len * inner);
  return Var<T>::make(
      std::move(out), {a},
      [axis, start, full](const Var<T>& g) {
        return std::vector<Var<T>>{embed(g, axis, start, full)};
      },
      "slice");
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ParameterError("concat of nothing");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw ParameterError("concat axis out of range");
  std::int64_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ParameterError("concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != out_shape[d])
        throw ParameterError("concat shape mismatch: " + to_string(s) + " vs " +
                             to_string(out_shape));
    total += s[axis];
  }
  out_shape[axis] = total;
  Tensor<T> out(out_shape);
  const std::int64_t outer = numel_of(Shape(out_shape.begin(), out_shape.begin() + axis));
  const std::int64_t inner = numel_of(Shape(out_shape.begin() + axis + 1, out_shape.end()));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const std::int64_t len = p.shape()[axis];
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(p.value().data() + o * len * inner, len * inner,
                  out.data() + (o * total + off) * inner);
    offsets.push_back(off);
    off += len;
  }
  std::vector<std::int64_t> lens;
  for (const auto& p : parts) lens.push_back(p.shape()[axis]);
  return Var<T>::make(
      std::move(out), parts,
      [axis, offsets, lens](const Var<T>& g) {
        std::vector<Var<T>> gs;
        for (std::size_t i = 0; i < offsets.size(); ++i)
          gs.push_back(slice(g, axis, offsets[i], lens[i]));
        return gs;
      },
      "concat");
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
  return Var<T>::make(
      kernels::matmul(a.value(), b.value(), ta, tb), {a, b},
      [a, b, ta, tb](const Var<T>& g) {
        Var<T> ga, gb;
        if (a.requires_grad()) ga = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
        if (b.requires_grad()) gb = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
        return std::vector<Var<T>>{ga, gb};
      },
      "matmul");
}

template <typename T>
Var<T> flip_transpose(const Var<T>& w) {
  return Var<T>::make(
      kernels::flip_transpose(w.value()), {w},
      [](const Var<T>& g) { return std::vector<Var<T>>{flip_transpose(g)}; },
      "flip_transpose");
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::int64_t pad);

template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, std::int64_t k,
                          std::int64_t pad, bool per_sample) {
  return Var<T>::make(
      kernels::conv2d_weight_grad(x.value(), gy.value(), k, pad, per_sample), {x, gy},
      [x, gy, k, pad](const Var<T>& g) {
        Var<T> gx, ggy;
        if (x.requires_grad()) gx = conv2d(gy, flip_transpose(g), k - 1 - pad);
        if (gy.requires_grad()) ggy = conv2d(x, g, pad);
        return std::vector<Var<T>>{gx, ggy};
      },
      "conv2d_weight_grad");
}

/// Stride-1 convolution (cross-correlation). `w` is [Co,Ci,k,k], or
/// [N,Co,Ci,k,k] for per-sample weights.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::int64_t pad) {
  return Var<T>::make(
      kernels::conv2d(x.value(), w.value(), pad), {x, w},
      [x, w, pad](const Var<T>& g) {
        const std::int64_t k = w.shape().back();
        Var<T> gx, gw;
        if (x.requires_grad()) gx = conv2d(g, flip_transpose(w), k - 1 - pad);
        if (w.requires_grad()) gw = conv2d_weight_grad(x, g, k, pad, w.shape().size() == 5);
        return std::vector<Var<T>>{gx, gw};
      },
      "conv2d");
}

template <typename T>
Var<T> upsample2(const Var<T>& x);

template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  return Var<T>::make(
      kernels::avg_pool2(x.value()), {x},
      [](const Var<T>& g) { return std::vector<Var<T>>{scale(upsample2(g), T(0.25))}; },
      "avg_pool2");
}

template <typename T>
Var<T> upsample2(const Var<T>& x) {
  return Var<T>::make(
      kernels::upsample2(x.value()), {x},
      [](const Var<T>& g) { return std::vector<Var<T>>{scale(avg_pool2(g), T(4))}; },
      "upsample2");
}

/// Elementwise cond ? a : b with `cond` a constant 0/1 tensor broadcast
/// against both operands. Values are copied, never blended.
template <typename T>
Var<T> select_where(const Tensor<T>& cond, const Var<T>& a, const Var<T>& b) {
  const Shape out_shape = broadcast_shape(broadcast_shape(cond.shape(), a.shape()), b.shape());
  const Tensor<T> c = facefill::broadcast_to(cond, out_shape);
  const Tensor<T> av = facefill::broadcast_to(a.value(), out_shape);
  const Tensor<T> bv = facefill::broadcast_to(b.value(), out_shape);
  Tensor<T> out(out_shape);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = c[i] != T(0) ? av[i] : bv[i];
  const Shape sa = a.shape(), sb = b.shape();
  return Var<T>::make(
      std::move(out), {a, b},
      [cond, sa, sb](const Var<T>& g) {
        const Tensor<T> inv = map(cond, [](T v) { return v != T(0) ? T(0) : T(1); });
        const Tensor<T> on = map(cond, [](T v) { return v != T(0) ? T(1) : T(0); });
        return std::vector<Var<T>>{sum_to(mul(g, constant(on)), sa),
                                   sum_to(mul(g, constant(inv)), sb)};
      },
      "select");
}

/// Row-wise log-softmax of a [N,K] tensor.
template <typename T>
Var<T> log_softmax(const Var<T>& x) {
  if (x.shape().size() != 2) throw ParameterError("log_softmax expects [N,K]");
  const std::int64_t n = x.dim(0), k = x.dim(1);
  Tensor<T> mx({n, 1});
  for (std::int64_t i = 0; i < n; ++i) {
    T m = x.value()[i * k];
    for (std::int64_t j = 1; j < k; ++j) m = std::max(m, x.value()[i * k + j]);
    mx[i] = m;
  }
  const Var<T> shifted = sub(x, constant(mx));
  return sub(shifted, log(sum_axes(exp(shifted), {1})));
}

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a) { return neg(a); }

}  // namespace facefill
