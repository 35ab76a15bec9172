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
#include <string>
#include <utility>
#include <vector>

#include "facefill/hash.hpp"
#include "facefill/ops.hpp"
#include "facefill/rng.hpp"

namespace facefill {

template <typename T>
Tensor<T> randn(Shape s, Rng& rng, T stddev = T(1)) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.vec()) v = static_cast<T>(rng.normal()) * stddev;
  return t;
}

/// Ordered, named collection of learnable tensors.
template <typename T>
class ParamSet {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    for (const auto& [n, _] : items_)
      if (n == name) throw ParameterError("duplicate parameter name: " + name);
    Var<T> v = Var<T>::leaf(std::move(init), !frozen_);
    items_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Var<T>>>& items() const { return items_; }

  std::vector<Var<T>> vars() const {
    std::vector<Var<T>> out;
    for (const auto& [_, v] : items_) out.push_back(v);
    return out;
  }

  Var<T> get(const std::string& name) const {
    for (const auto& [n, v] : items_)
      if (n == name) return v;
    throw ParameterError("unknown parameter: " + name);
  }

  /// Marks every parameter as constant; gradients still flow through the
  /// network to its inputs.
  void freeze() {
    frozen_ = true;
    for (auto& [_, v] : items_) v.set_requires_grad(false);
  }
  bool frozen() const { return frozen_; }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& [_, v] : items_) n += v.numel();
    return n;
  }

  /// SHA-256 over names, shapes and raw values.
  std::string hash() const {
    Sha256 h;
    for (const auto& [n, v] : items_) {
      h.update(n);
      h.update(to_string(v.shape()));
      h.update(v.value().span());
    }
    return h.hex();
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
  bool frozen_ = false;
};

/// Dense layer with equalized learning rate: weights are stored at unit
/// scale and multiplied by lr_mul / sqrt(fan_in) at use.
template <typename T>
struct Linear {
  Var<T> weight, bias;
  T w_scale = 1, b_scale = 1;
  std::int64_t in = 0, out = 0;

  Linear() = default;
  Linear(ParamSet<T>& ps, const std::string& name, std::int64_t in_features,
         std::int64_t out_features, Rng& rng, T bias_init = T(0), T lr_mul = T(1))
      : in(in_features), out(out_features) {
    weight = ps.add(name + ".weight", randn<T>({out, in}, rng, T(1) / lr_mul));
    bias = ps.add(name + ".bias", Tensor<T>({out}, bias_init / lr_mul));
    w_scale = lr_mul / std::sqrt(static_cast<T>(in));
    b_scale = lr_mul;
  }

  Var<T> operator()(const Var<T>& x) const {
    if (x.shape().size() != 2 || x.dim(1) != in)
      throw ParameterError("linear layer expects [N," + std::to_string(in) + "], got " +
                           to_string(x.shape()));
    return add(matmul(x, scale(weight, w_scale), false, true),
               reshape(scale(bias, b_scale), {1, out}));
  }
};

template <typename T>
struct Conv2d {
  Var<T> weight, bias;
  T w_scale = 1;
  std::int64_t ci = 0, co = 0, k = 1;

  Conv2d() = default;
  Conv2d(ParamSet<T>& ps, const std::string& name, std::int64_t in_ch, std::int64_t out_ch,
         std::int64_t kernel, Rng& rng, bool with_bias = true)
      : ci(in_ch), co(out_ch), k(kernel) {
    weight = ps.add(name + ".weight", randn<T>({co, ci, k, k}, rng));
    if (with_bias) bias = ps.add(name + ".bias", Tensor<T>({co}));
    w_scale = T(1) / std::sqrt(static_cast<T>(ci * k * k));
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> y = conv2d(x, scale(weight, w_scale), k / 2);
    if (bias.defined()) y = add(y, reshape(bias, {1, co, 1, 1}));
    return y;
  }
};

inline constexpr double kActGain = 1.4142135623730951;  // sqrt(2)

template <typename T>
Var<T> lrelu(const Var<T>& x) {
  return leaky_relu(x, T(0.2), T(kActGain));
}

/// Convolution whose weights are scaled per input channel by `v` [N,Ci]
/// (modulation) and, optionally, renormalized per output filter
/// (demodulation). `weight` is [Co,Ci,k,k] and already carries its scale.
template <typename T>
Var<T> modulated_conv(const Var<T>& x, const Var<T>& weight, const Var<T>& v,
                      bool demodulate, T eps = T(1e-8)) {
  const Shape ws = weight.shape();
  if (ws.size() != 4) throw ParameterError("modulated_conv weight must be [Co,Ci,k,k]");
  const std::int64_t co = ws[0], ci = ws[1], k = ws[2];
  if (v.shape().size() != 2 || v.dim(1) != ci)
    throw ParameterError("style vector length " +
                         (v.shape().size() == 2 ? std::to_string(v.dim(1)) : to_string(v.shape())) +
                         " != input channels " + std::to_string(ci));
  if (x.shape().size() != 4 || x.dim(1) != ci)
    throw ParameterError("modulated_conv input channel mismatch: " + to_string(x.shape()));
  const std::int64_t n = v.dim(0);
  if (x.dim(0) != n) throw ParameterError("modulated_conv batch mismatch");
  Var<T> w = mul(reshape(weight, {1, co, ci, k, k}), reshape(v, {n, 1, ci, 1, 1}));
  if (demodulate) {
    const Var<T> d = pow(add_scalar(sum_axes(square(w), {2, 3, 4}), eps), T(-0.5));
    w = mul(w, d);
  }
  return conv2d(x, w, k / 2);
}

/// Modulated 3x3 convolution + per-pixel noise + bias + activation.
template <typename T>
struct StyleConv {
  Linear<T> affine;
  Var<T> weight, noise_strength, bias;
  T w_scale = 1;
  std::int64_t ci = 0, co = 0, k = 3;

  StyleConv() = default;
  StyleConv(ParamSet<T>& ps, const std::string& name, std::int64_t style_dim,
            std::int64_t in_ch, std::int64_t out_ch, Rng& rng, std::int64_t kernel = 3)
      : ci(in_ch), co(out_ch), k(kernel) {
    affine = Linear<T>(ps, name + ".affine", style_dim, ci, rng, T(1));
    weight = ps.add(name + ".weight", randn<T>({co, ci, k, k}, rng));
    noise_strength = ps.add(name + ".noise_strength", Tensor<T>::zeros({1}));
    bias = ps.add(name + ".bias", Tensor<T>({co}));
    w_scale = T(1) / std::sqrt(static_cast<T>(ci * k * k));
  }

  /// `noise` is [N,1,H,W] at the output resolution.
  Var<T> operator()(const Var<T>& x, const Var<T>& style_in, const Tensor<T>& noise) const {
    const Var<T> v = affine(style_in);
    Var<T> y = modulated_conv(x, scale(weight, w_scale), v, true);
    y = add(y, mul(reshape(noise_strength, {1, 1, 1, 1}), constant(noise)));
    y = add(y, reshape(bias, {1, co, 1, 1}));
    return lrelu(y);
  }
};

/// Modulated 1x1 projection to RGB without demodulation.
template <typename T>
struct ToRgb {
  Linear<T> affine;
  Var<T> weight, bias;
  T w_scale = 1;
  std::int64_t ci = 0;

  ToRgb() = default;
  ToRgb(ParamSet<T>& ps, const std::string& name, std::int64_t style_dim, std::int64_t in_ch,
        Rng& rng)
      : ci(in_ch) {
    affine = Linear<T>(ps, name + ".affine", style_dim, ci, rng, T(1));
    weight = ps.add(name + ".weight", randn<T>({3, ci, 1, 1}, rng));
    bias = ps.add(name + ".bias", Tensor<T>({3}));
    w_scale = T(1) / std::sqrt(static_cast<T>(ci));
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& style_in) const {
    const Var<T> v = affine(style_in);
    return add(modulated_conv(x, scale(weight, w_scale), v, false),
               reshape(bias, {1, 3, 1, 1}));
  }
};

}  // namespace facefill
