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
#include <functional>
#include <vector>

#include "facefill/masks.hpp"
#include "facefill/ops.hpp"

namespace facefill {

/// Stacks per-sample weight masks into [N,1,H,W].
template <typename T>
Tensor<T> stack_weights(const std::vector<WeightMask>& masks) {
  if (masks.empty()) throw ParameterError("no weight masks to stack");
  const std::int64_t h = masks[0].h, w = masks[0].w;
  Tensor<T> t({static_cast<std::int64_t>(masks.size()), 1, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n].h != h || masks[n].w != w) throw ParameterError("weight mask sizes differ");
    for (std::int64_t i = 0; i < h * w; ++i)
      t[static_cast<std::int64_t>(n) * h * w + i] = static_cast<T>(masks[n].data[i]);
  }
  return t;
}

/// Identity in the forward pass; in the backward pass the incoming gradient
/// is multiplied pointwise by `weight` ([1,1,H,W] or [N,1,H,W], broadcast over
/// channels). The weight is a constant: no gradient is produced for it.
template <typename T>
Var<T> svgl_apply(const Var<T>& x, const Tensor<T>& weight) {
  const Shape& s = x.shape();
  if (s.size() != 4 || weight.rank() != 4 || weight.dim(1) != 1 || weight.dim(2) != s[2] ||
      weight.dim(3) != s[3] || (weight.dim(0) != 1 && weight.dim(0) != s[0]))
    throw ParameterError("gate mask " + to_string(weight.shape()) +
                         " does not match input " + to_string(s));
  return Var<T>::make(
      x.value(), {x},
      [weight](const Var<T>& g) { return std::vector<Var<T>>{mul(g, constant(weight))}; },
      "svgl");
}

template <typename T>
Var<T> svgl_apply(const Var<T>& x, const WeightMask& mask) {
  return svgl_apply(x, mask.template tensor<T>());
}

/// Holds one spatial weight mask for the lifetime of a forward/backward pair.
template <typename T>
class SpatialGradientGate {
 public:
  explicit SpatialGradientGate(Tensor<T> weight) : weight_(std::move(weight)) {}
  explicit SpatialGradientGate(const WeightMask& m) : weight_(m.template tensor<T>()) {}
  explicit SpatialGradientGate(const std::vector<WeightMask>& ms)
      : weight_(stack_weights<T>(ms)) {}

  Var<T> operator()(const Var<T>& x) const { return svgl_apply(x, weight_); }
  const Tensor<T>& weight() const { return weight_; }

 private:
  Tensor<T> weight_;
};

struct GateCheckReport {
  double max_rel_error = 0;  // max |autodiff - fd| / max |fd|
  double grad_scale = 0;     // max |fd|
  std::int64_t checked = 0;
};

/// Compares the reverse-mode gradient of loss(svgl(x, M)) with M times the
/// central finite-difference gradient of loss at x.
inline GateCheckReport gradient_check(const Tensor<double>& weight,
                                      const std::function<Var<double>(const Var<double>&)>& loss,
                                      const Tensor<double>& x0, double eps = 1e-6) {
  if (!(eps > 0)) throw ParameterError("finite-difference step must be positive");
  Var<double> x = Var<double>::leaf(x0);
  const Var<double> l = loss(svgl_apply(x, weight));
  if (!std::isfinite(l.item())) throw NumericError("gradient_check: non-finite loss");
  const Tensor<double> analytic = grad(l, {x})[0].value();

  Tensor<double> probe = x0;
  Tensor<double> fd(x0.shape());
  NoGrad no_grad;
  for (std::int64_t i = 0; i < probe.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = loss(Var<double>(probe)).item();
    probe[i] = orig - eps;
    const double down = loss(Var<double>(probe)).item();
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("gradient_check: non-finite loss under perturbation");
    fd[i] = (up - down) / (2 * eps);
  }
  const Tensor<double> gated_fd = zip(fd, broadcast_to(weight, fd.shape()),
                                      [](double a, double b) { return a * b; });
  GateCheckReport r;
  r.grad_scale = max_abs(gated_fd);
  double worst = 0;
  for (std::int64_t i = 0; i < fd.numel(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - gated_fd[i]));
  r.max_rel_error = worst / std::max(r.grad_scale, 1e-300);
  r.checked = fd.numel();
  return r;
}

}  // namespace facefill
