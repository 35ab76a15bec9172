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
#include <vector>

#include "facefill/model_config.hpp"
#include "facefill/nn.hpp"
#include "facefill/pyramid.hpp"

namespace facefill {

/// Per-layer binary choice between the exemplar code (1) and the stochastic
/// code (0).
struct MixSelector {
  std::vector<std::uint8_t> phi;

  std::int64_t layers() const { return static_cast<std::int64_t>(phi.size()); }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto v : phi) n += v;
    return n;
  }

  /// The first `stochastic` layers take the stochastic code, the rest the
  /// exemplar code.
  static MixSelector coarse_stochastic(std::int64_t layers, std::int64_t stochastic = 4) {
    MixSelector s;
    for (std::int64_t i = 0; i < layers; ++i) s.phi.push_back(i >= stochastic ? 1 : 0);
    return s;
  }
  static MixSelector all(std::int64_t layers, bool exemplar) {
    return MixSelector{std::vector<std::uint8_t>(static_cast<std::size_t>(layers), exemplar)};
  }
  /// Exemplar layers i..j (1-based, inclusive).
  static MixSelector range(std::int64_t layers, std::int64_t i, std::int64_t j) {
    if (i < 1 || j < i || j > layers)
      throw ParameterError("invalid layer range " + std::to_string(i) + ".." + std::to_string(j));
    MixSelector s = all(layers, false);
    for (std::int64_t k = i - 1; k < j; ++k) s.phi[k] = 1;
    return s;
  }

  static MixSelector parse(const std::string& bits) {
    if (bits.empty()) throw ParameterError("selector bitstring is empty");
    MixSelector s;
    for (char c : bits) {
      if (c != '0' && c != '1') throw ParameterError("selector must be a bitstring, got '" + bits + "'");
      s.phi.push_back(c == '1');
    }
    return s;
  }
  std::string str() const {
    std::string out;
    for (auto v : phi) out.push_back(v ? '1' : '0');
    return out;
  }

  /// [1,L,1] with 1 where the exemplar layer is taken.
  template <typename T>
  Tensor<T> tensor() const {
    Tensor<T> t({1, layers(), 1});
    for (std::int64_t i = 0; i < layers(); ++i) t[i] = phi[i] ? T(1) : T(0);
    return t;
  }

  friend bool operator==(const MixSelector&, const MixSelector&) = default;
};

namespace detail {
inline void check_code(const Shape& s, const char* what) {
  if (s.size() != 3) throw ParameterError(std::string(what) + " must be [N,L,D], got " + to_string(s));
}
}  // namespace detail

/// Layerwise selection: exemplar layer where phi = 1, stochastic otherwise.
/// Codes are [N,L,D].
template <typename T>
Var<T> mix_styles(const Var<T>& exemplar, const Var<T>& stochastic, const MixSelector& phi) {
  detail::check_code(exemplar.shape(), "exemplar code");
  detail::check_code(stochastic.shape(), "stochastic code");
  if (exemplar.shape() != stochastic.shape())
    throw ParameterError("style codes differ in shape: " + to_string(exemplar.shape()) + " vs " +
                         to_string(stochastic.shape()));
  if (phi.layers() != exemplar.dim(1))
    throw ParameterError("selector has " + std::to_string(phi.layers()) + " entries, codes have " +
                         std::to_string(exemplar.dim(1)) + " layers");
  return select_where(phi.template tensor<T>(), exemplar, stochastic);
}

/// Layers i..j (1-based, inclusive) from `second`, the rest from `first`.
template <typename T>
Var<T> crossover_mix(const Var<T>& first, const Var<T>& second, std::int64_t i, std::int64_t j) {
  detail::check_code(first.shape(), "style code");
  return mix_styles(second, first, MixSelector::range(first.dim(1), i, j));
}

/// w_avg + psi * (w - w_avg), with `average` broadcast against `code`.
template <typename T>
Var<T> truncate(const Var<T>& code, const Tensor<T>& average, T psi) {
  if (!(psi >= T(0) && psi <= T(1))) throw ParameterError("truncation psi must be in [0,1]");
  if (psi == T(1)) return code;
  const Var<T> avg = constant(average);
  return add(avg, scale(sub(code, avg), psi));
}

/// Fully-connected mapping from latents [N,D] to stochastic codes [N,L,D].
/// Also tracks the running mean of its outputs for truncation.
template <typename T>
class MappingNetwork {
 public:
  MappingNetwork(const ModelConfig& cfg, Rng& rng) : layers_(cfg.style_layers()), dim_(cfg.style_dim) {
    for (std::int64_t i = 0; i < cfg.mapping_layers; ++i)
      fc_.emplace_back(params_, "mapping.fc" + std::to_string(i), dim_, dim_, rng, T(0),
                       static_cast<T>(cfg.mapping_lr_mul));
    w_avg_ = Tensor<T>({dim_});
  }
  MappingNetwork(const MappingNetwork&) = delete;
  MappingNetwork& operator=(const MappingNetwork&) = delete;
  MappingNetwork(MappingNetwork&&) = default;

  /// [N,D] -> [N,D] before layer broadcast.
  Var<T> map_single(const Var<T>& z) const {
    if (z.shape().size() != 2 || z.dim(1) != dim_)
      throw ParameterError("latent must be [N," + std::to_string(dim_) + "], got " + to_string(z.shape()));
    if (!z.value().all_finite()) throw NumericError("latent contains non-finite values");
    Var<T> x = mul(z, pow(add_scalar(mean_axes(square(z), {1}), T(1e-8)), T(-0.5)));
    for (const auto& fc : fc_) x = lrelu(fc(x));
    return x;
  }

  /// [N,D] -> [N,L,D]
  Var<T> operator()(const Var<T>& z) const {
    const Var<T> w = map_single(z);
    return broadcast_to(reshape(w, {z.dim(0), 1, dim_}), {z.dim(0), layers_, dim_});
  }

  /// Exponential moving average of mapped codes.
  void track_average(const Tensor<T>& mapped, T decay = T(0.995)) {
    const std::int64_t n = mapped.dim(0);
    for (std::int64_t d = 0; d < dim_; ++d) {
      T m = 0;
      for (std::int64_t i = 0; i < n; ++i) m += mapped[i * dim_ + d];
      m /= static_cast<T>(n);
      w_avg_[d] = m + decay * (w_avg_[d] - m);
    }
  }

  /// [1,1,D], broadcastable against codes.
  Tensor<T> average_code() const { return w_avg_.reshaped({1, 1, dim_}); }
  Tensor<T>& w_avg() { return w_avg_; }
  const Tensor<T>& w_avg() const { return w_avg_; }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  std::int64_t layers() const { return layers_; }
  std::int64_t dim() const { return dim_; }

 private:
  ParamSet<T> params_;
  std::vector<Linear<T>> fc_;
  Tensor<T> w_avg_;
  std::int64_t layers_, dim_;
};

template <typename T>
Tensor<T> sample_latents(Rng& rng, std::int64_t n, std::int64_t dim) {
  return randn<T>({n, dim}, rng);
}

template <typename T>
struct MixedCode {
  Var<T> code;                       // [N,L,D]
  std::vector<std::int64_t> cutoff;  // per sample; -1 when no crossover
};

/// With probability p per sample, map both latents and take layers
/// [cutoff, L) from the second, cutoff ~ U{1..L-1}; otherwise map z1 alone.
template <typename T>
MixedCode<T> mixing_regularization(const Tensor<T>& z1, const Tensor<T>& z2, Rng& rng, double p,
                                   const MappingNetwork<T>& mapping) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("mixing probability must be in [0,1]");
  const std::int64_t n = z1.dim(0), layers = mapping.layers();
  MixedCode<T> out;
  Tensor<T> from_first({n, layers, 1}, T(1));
  bool any = false;
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t cut = -1;
    if (layers > 1 && rng.bernoulli(p)) {
      cut = rng.uniform_int(1, layers - 1);
      for (std::int64_t l = cut; l < layers; ++l) from_first[i * layers + l] = T(0);
      any = true;
    }
    out.cutoff.push_back(cut);
  }
  const Var<T> w1 = mapping(Var<T>(z1));
  out.code = any ? select_where(from_first, w1, mapping(Var<T>(z2))) : w1;
  return out;
}

/// Frozen image-to-code encoder: a downsampling pyramid whose final features
/// feed a dense head producing L codes of D values.
template <typename T>
class StyleEncoder {
 public:
  StyleEncoder(const ModelConfig& cfg, Rng& rng)
      : resolution_(cfg.resolution), layers_(cfg.style_layers()), dim_(cfg.style_dim) {
    pyramid_ = DownPyramid<T>(params_, "encoder.pyramid", 3, cfg.encoder_channels, rng);
    const std::int64_t side = resolution_ >> (cfg.encoder_channels.size() - 1);
    feat_ = pyramid_.out_channels() * side * side;
    head_ = Linear<T>(params_, "encoder.head", feat_, layers_ * dim_, rng);
  }
  StyleEncoder(const StyleEncoder&) = delete;
  StyleEncoder& operator=(const StyleEncoder&) = delete;
  StyleEncoder(StyleEncoder&&) = default;

  /// [N,3,H,W] -> [N,L,D]
  Var<T> operator()(const Var<T>& img) const {
    const Shape& s = img.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != resolution_ || s[3] != resolution_)
      throw ParameterError("style encoder expects [N,3," + std::to_string(resolution_) + "," +
                           std::to_string(resolution_) + "], got " + to_string(s));
    const Var<T> f = pyramid_.features(img).back();
    const Var<T> flat = reshape(f, {s[0], feat_});
    return reshape(head_(flat), {s[0], layers_, dim_});
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  void freeze() { params_.freeze(); }
  std::int64_t feature_size() const { return feat_; }

 private:
  ParamSet<T> params_;
  DownPyramid<T> pyramid_;
  Linear<T> head_;
  std::int64_t resolution_, layers_, dim_, feat_ = 0;
};

}  // namespace facefill
