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

#include <string>
#include <vector>

#include "facefill/model_config.hpp"
#include "facefill/pyramid.hpp"

// Frozen stand-ins for the face-recognition and perceptual networks used by
// the training losses.
namespace facefill {

namespace detail {
inline void check_rgb(const Shape& s, std::int64_t res, const char* who) {
  if (s.size() != 4 || s[1] != 3 || s[2] != res || s[3] != res)
    throw ParameterError(std::string(who) + " expects [N,3," + std::to_string(res) + "," +
                         std::to_string(res) + "], got " + to_string(s));
}
}  // namespace detail

/// Image -> identity embedding [N, identity_dim].
template <typename T>
class IdentityNet {
 public:
  IdentityNet(const ModelConfig& cfg, Rng& rng) : res_(cfg.resolution) {
    pyramid_ = DownPyramid<T>(params_, "identity.pyramid", 3, cfg.identity_channels, rng);
    const std::int64_t side = res_ >> (cfg.identity_channels.size() - 1);
    feat_ = pyramid_.out_channels() * side * side;
    head_ = Linear<T>(params_, "identity.head", feat_, cfg.identity_dim, rng);
  }
  IdentityNet(const IdentityNet&) = delete;
  IdentityNet& operator=(const IdentityNet&) = delete;
  IdentityNet(IdentityNet&&) = default;

  Var<T> operator()(const Var<T>& img) const {
    detail::check_rgb(img.shape(), res_, "identity network");
    const Var<T> f = pyramid_.features(img).back();
    return head_(reshape(f, {img.dim(0), feat_}));
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  void freeze() { params_.freeze(); }

 private:
  ParamSet<T> params_;
  DownPyramid<T> pyramid_;
  Linear<T> head_;
  std::int64_t res_, feat_ = 0;
};

/// Image -> multi-level feature maps for the perceptual distance.
template <typename T>
class PerceptualNet {
 public:
  PerceptualNet(const ModelConfig& cfg, Rng& rng) : res_(cfg.resolution) {
    pyramid_ = DownPyramid<T>(params_, "perceptual.pyramid", 3, cfg.perceptual_channels, rng);
    params_.freeze();
  }
  PerceptualNet(const PerceptualNet&) = delete;
  PerceptualNet& operator=(const PerceptualNet&) = delete;
  PerceptualNet(PerceptualNet&&) = default;

  std::vector<Var<T>> operator()(const Var<T>& img) const {
    detail::check_rgb(img.shape(), res_, "perceptual network");
    return pyramid_.features(img);
  }

  /// Per-sample sum over levels of the spatial mean of squared differences
  /// between channel-normalized features. Returns [N].
  Var<T> distance(const Var<T>& a, const Var<T>& b) const {
    const auto fa = (*this)(a);
    const auto fb = (*this)(b);
    const std::int64_t n = a.dim(0);
    Var<T> total;
    for (std::size_t l = 0; l < fa.size(); ++l) {
      auto unit = [](const Var<T>& f) {
        return div(f, add_scalar(norm_axes(f, {1}), T(1e-10)));
      };
      const Var<T> d = sum_axes(square(sub(unit(fa[l]), unit(fb[l]))), {1});
      const Var<T> per = reshape(mean_axes(d, {2, 3}), {n});
      total = total.defined() ? add(total, per) : per;
    }
    return total;
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

 private:
  ParamSet<T> params_;
  DownPyramid<T> pyramid_;
  std::int64_t res_;
};

}  // namespace facefill
