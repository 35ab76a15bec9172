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

#include <vector>

#include "facefill/embeddings.hpp"
#include "facefill/styles.hpp"

namespace facefill {

struct LossWeights {
  double lambda_id = 0.1;
  double lambda_lpips = 0.5;
  double lambda_attr = 0.1;
  double gamma = 10.0;

  void validate() const {
    if (lambda_id < 0 || lambda_lpips < 0 || lambda_attr < 0 || gamma < 0)
      throw ParameterError("loss weights must be non-negative");
  }
};

/// Critic loss: softplus(-real) + softplus(fake), batch means, plus the
/// regularization term (pass an empty Var for none).
template <typename T>
Var<T> adv_loss_d(const Var<T>& logits_real, const Var<T>& logits_fake, const Var<T>& r1_term = {}) {
  Var<T> l = add(mean(softplus(neg(logits_real))), mean(softplus(logits_fake)));
  return r1_term.defined() ? add(l, r1_term) : l;
}

/// Non-saturating generator loss: mean softplus(-fake).
template <typename T>
Var<T> adv_loss_g(const Var<T>& logits_fake) {
  return mean(softplus(neg(logits_fake)));
}

/// Per-sample 1 - cos(a, b) on [N,K] embeddings. Returns [N]. The
/// denominator is sqrt(|a|^2 |b|^2 + eps^2) with eps = 1e-8, which keeps
/// zero embeddings finite without biasing well-conditioned pairs.
template <typename T>
Var<T> cosine_distance(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape() || a.shape().size() != 2)
    throw ParameterError("cosine_distance expects equal [N,K] embeddings");
  const T eps = T(1e-8);
  const Var<T> dot = sum_axes(mul(a, b), {1});
  const Var<T> den = sqrt(add_scalar(mul(sum_axes(square(a), {1}), sum_axes(square(b), {1})), eps * eps));
  const Var<T> cos = div(dot, den);
  return add_scalar(neg(reshape(cos, {a.dim(0)})), T(1));
}

/// Batch mean of 1 - cos(R(out), R(exemplar)).
template <typename T>
Var<T> identity_loss(const Var<T>& out, const Var<T>& exemplar, const IdentityNet<T>& net) {
  return mean(cosine_distance(net(out), net(exemplar)));
}

/// Batch mean of the perceptual distance, counted only for samples whose
/// exemplar is their own ground truth. `gated_out` should already carry the
/// confidence-mask gate.
template <typename T>
Var<T> lpips_loss(const Var<T>& gated_out, const Var<T>& ground_truth, const PerceptualNet<T>& net,
                  const std::vector<bool>& same_flags) {
  const std::int64_t n = gated_out.dim(0);
  if (static_cast<std::int64_t>(same_flags.size()) != n)
    throw ParameterError("one same-image flag per sample required");
  Tensor<T> flags({n});
  bool any = false;
  for (std::int64_t i = 0; i < n; ++i) {
    flags[i] = same_flags[i] ? T(1) : T(0);
    any = any || same_flags[i];
  }
  if (!any) return Var<T>(Tensor<T>::scalar(T(0)));
  return scale(sum(mul(net.distance(gated_out, ground_truth), constant(flags))),
               T(1) / static_cast<T>(n));
}

/// Per-sample mean over exemplar-selected layers of ||w_bar_i - w_hat_i||_2,
/// then batch mean. Codes are [N,L,D].
template <typename T>
Var<T> attribute_loss_from_codes(const Var<T>& w_bar, const Var<T>& w_hat, const MixSelector& phi) {
  if (w_bar.shape() != w_hat.shape() || w_bar.shape().size() != 3)
    throw ParameterError("attribute loss needs matching [N,L,D] codes");
  if (phi.layers() != w_bar.dim(1)) throw ParameterError("selector length does not match code layers");
  const std::int64_t selected = phi.count();
  if (selected == 0) throw ParameterError("attribute loss undefined for an all-zero selector");
  const Var<T> dist = norm_axes(sub(w_bar, w_hat), {2});  // [N,L,1]
  const Var<T> picked = mul(dist, constant(phi.template tensor<T>()));
  return scale(sum(picked), T(1) / static_cast<T>(selected * w_bar.dim(0)));
}

/// Attribute loss of an image: encodes `gated_out` (which should carry the
/// reverse-mask gate) and compares it with the mixed target code.
template <typename T>
Var<T> attribute_loss(const Var<T>& gated_out, const Var<T>& w_hat, const MixSelector& phi,
                      const StyleEncoder<T>& encoder) {
  if (phi.count() == 0) throw ParameterError("attribute loss undefined for an all-zero selector");
  return attribute_loss_from_codes(encoder(gated_out), w_hat, phi);
}

template <typename T>
struct GeneratorLossParts {
  Var<T> adv, id, lpips, attr;
};

/// adv + lambda_id * id + lambda_lpips * lpips + lambda_attr * attr
template <typename T>
Var<T> total_objective(const GeneratorLossParts<T>& parts, const LossWeights& w) {
  w.validate();
  Var<T> total = parts.adv;
  auto term = [&](const Var<T>& v, double lambda) {
    if (v.defined() && lambda != 0.0) total = add(total, scale(v, static_cast<T>(lambda)));
  };
  term(parts.id, w.lambda_id);
  term(parts.lpips, w.lambda_lpips);
  term(parts.attr, w.lambda_attr);
  return total;
}

}  // namespace facefill
