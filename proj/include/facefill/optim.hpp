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

#include "facefill/autograd.hpp"

namespace facefill {

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Adam over a fixed, named list of parameters.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<std::pair<std::string, Var<T>>> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (const auto& [_, p] : params_) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  /// `grads` in parameter order.
  void step(const std::vector<Var<T>>& grads) {
    if (grads.size() != params_.size()) throw ParameterError("gradient count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step = static_cast<T>(cfg_.lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = params_[i].second.mutable_value();
      const Tensor<T>& g = grads[i].value();
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (std::int64_t k = 0; k < p.numel(); ++k) {
        m[k] = b1 * m[k] + (T(1) - b1) * g[k];
        v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
        p[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
      }
    }
  }

  std::vector<Var<T>> vars() const {
    std::vector<Var<T>> out;
    for (const auto& [_, p] : params_) out.push_back(p);
    return out;
  }
  const std::vector<std::pair<std::string, Var<T>>>& params() const { return params_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
  AdamConfig cfg_;
};

template <typename T, typename... Sets>
std::vector<std::pair<std::string, Var<T>>> join_params(const Sets&... sets) {
  std::vector<std::pair<std::string, Var<T>>> out;
  (out.insert(out.end(), sets.items().begin(), sets.items().end()), ...);
  return out;
}

}  // namespace facefill
