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

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "facefill/model_config.hpp"
#include "facefill/nn.hpp"

namespace facefill {

/// Appends the mean standard deviation across batch groups as one extra
/// channel. Sample n belongs to group n % (N / G).
template <typename T>
Var<T> minibatch_stddev(const Var<T>& x, std::int64_t group) {
  const Shape s = x.shape();
  const std::int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  std::int64_t g = std::min(group, n);
  while (g > 1 && n % g) --g;
  g = std::max<std::int64_t>(g, 1);
  const std::int64_t m = n / g;
  Var<T> y = reshape(x, {g, m, c, h, w});
  y = sub(y, mean_axes(y, {0}));
  y = mean_axes(square(y), {0});                      // [1,m,c,h,w]
  y = sqrt(add_scalar(y, T(1e-8)));
  y = mean_axes(y, {2, 3, 4});                        // [1,m,1,1,1]
  y = broadcast_to(y, {g, m, 1, h, w});
  return concat<T>({x, reshape(y, {n, 1, h, w})}, 1);
}

/// Downsampling convolutional critic producing one logit per image.
template <typename T>
class Discriminator {
 public:
  Discriminator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::int64_t res = cfg_.resolution;
    const std::int64_t in_ch = cfg_.d_mask_conditioned ? 4 : 3;
    from_rgb_ = Conv2d<T>(params_, "disc.from_rgb", in_ch, cfg_.channels_at(res), 1, rng);
    for (std::int64_t r = res; r >= 8; r /= 2) {
      const std::string p = "disc.r" + std::to_string(r);
      Block b;
      b.conv = Conv2d<T>(params_, p + ".conv", cfg_.channels_at(r), cfg_.channels_at(r), 3, rng);
      b.down = Conv2d<T>(params_, p + ".down", cfg_.channels_at(r), cfg_.channels_at(r / 2), 3, rng);
      blocks_.push_back(std::move(b));
    }
    const std::int64_t c4 = cfg_.channels_at(4);
    const std::int64_t extra = cfg_.mbstd_group > 0 ? 1 : 0;
    conv4_ = Conv2d<T>(params_, "disc.r4.conv", c4 + extra, c4, 3, rng);
    fc_ = Linear<T>(params_, "disc.r4.fc", c4 * 16, c4, rng);
    out_ = Linear<T>(params_, "disc.out", c4, 1, rng);
  }
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;
  Discriminator(Discriminator&&) = default;

  /// [N,3,H,W] (or [N,4,H,W] when mask-conditioned) -> [N,1] logits.
  Var<T> operator()(const Var<T>& img) const {
    const Shape& s = img.shape();
    const std::int64_t in_ch = cfg_.d_mask_conditioned ? 4 : 3;
    if (s.size() != 4 || s[1] != in_ch || s[2] != cfg_.resolution || s[3] != cfg_.resolution)
      throw ParameterError("discriminator expects [N," + std::to_string(in_ch) + "," +
                           std::to_string(cfg_.resolution) + "," + std::to_string(cfg_.resolution) +
                           "], got " + to_string(s));
    Var<T> h = lrelu(from_rgb_(img));
    for (const auto& b : blocks_) {
      h = lrelu(b.conv(h));
      h = lrelu(b.down(avg_pool2(h)));
    }
    if (cfg_.mbstd_group > 0) h = minibatch_stddev(h, cfg_.mbstd_group);
    h = lrelu(conv4_(h));
    h = lrelu(fc_(reshape(h, {s[0], cfg_.channels_at(4) * 16})));
    return out_(h);
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  struct Block {
    Conv2d<T> conv, down;
  };
  ModelConfig cfg_;
  ParamSet<T> params_;
  Conv2d<T> from_rgb_;
  std::vector<Block> blocks_;
  Conv2d<T> conv4_;
  Linear<T> fc_, out_;
};

/// (gamma / 2) * mean_n ||d critic(x_n) / d x_n||^2 over real samples. The
/// result stays differentiable with respect to the critic's parameters.
template <typename T>
Var<T> r1_penalty(const std::function<Var<T>(const Var<T>&)>& critic, const Tensor<T>& real,
                  T gamma) {
  if (gamma < T(0)) throw ParameterError("R1 weight must be non-negative");
  const Var<T> x = Var<T>::leaf(real);
  const Var<T> logits = critic(x);
  const Var<T> g = grad(sum(logits), {x}, /*create_graph=*/true)[0];
  if (!g.value().all_finite()) throw NumericError("non-finite critic gradient in R1 penalty");
  const T per_sample = T(1) / static_cast<T>(real.dim(0));
  return scale(sum(square(g)), gamma / T(2) * per_sample);
}

}  // namespace facefill
