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

#include <map>
#include <string>
#include <vector>

#include "facefill/masks.hpp"
#include "facefill/model_config.hpp"
#include "facefill/nn.hpp"

namespace facefill {

/// Encoder output: global code c [N, 2*D] and features keyed by resolution.
template <typename T>
struct EncodedInput {
  Var<T> global_code;
  std::map<std::int64_t, Var<T>> features;
};

/// Stacks per-sample binary masks into [N,1,H,W].
template <typename T>
Tensor<T> stack_masks(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw ParameterError("no masks to stack");
  const std::int64_t h = masks[0].h, w = masks[0].w;
  Tensor<T> t({static_cast<std::int64_t>(masks.size()), 1, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n].h != h || masks[n].w != w) throw ParameterError("mask sizes differ");
    for (std::int64_t i = 0; i < h * w; ++i)
      t[static_cast<std::int64_t>(n) * h * w + i] = static_cast<T>(masks[n].data[i]);
  }
  return t;
}

/// I_in . (1 - M) + I_pred . M, realized as a pointwise select so known
/// pixels are copied from I_in unchanged. `mask` is [N or 1,1,H,W].
template <typename T>
Var<T> composite(const Var<T>& input, const Var<T>& predicted, const Tensor<T>& mask) {
  if (input.shape() != predicted.shape())
    throw ParameterError("composite: input " + to_string(input.shape()) + " and prediction " +
                         to_string(predicted.shape()) + " differ");
  const Shape& s = input.shape();
  if (s.size() != 4 || mask.rank() != 4 || mask.dim(1) != 1 || mask.dim(2) != s[2] ||
      mask.dim(3) != s[3] || (mask.dim(0) != 1 && mask.dim(0) != s[0]))
    throw ParameterError("composite: mask " + to_string(mask.shape()) + " does not match " +
                         to_string(s));
  return select_where(mask, predicted, input);
}

/// Per-convolution noise maps drawn in a fixed order from one seed.
template <typename T>
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, std::int64_t batch) : rng_(seed), batch_(batch) {}
  Tensor<T> next(std::int64_t res) { return randn<T>({batch_, 1, res, res}, rng_); }

 private:
  Rng rng_;
  std::int64_t batch_;
};

/// Masked-image encoder plus style-modulated decoder with encoder skips.
///
/// Style slot layout for L = 2*log2(R) - 2 slots: slot 0 drives the 4x4
/// convolution and slot 1 its image layer; for the block at resolution
/// 8 * 2^b, slots 1+2b and 2+2b drive the two convolutions and slot 3+2b the
/// image layer (the first convolution of a block shares its slot with the
/// previous image layer). Every slot gets its own affine map from [c, w_i].
template <typename T>
class Generator {
 public:
  Generator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::int64_t res = cfg_.resolution;
    const std::int64_t sdim = cfg_.global_code_dim() + cfg_.style_dim;
    // Encoder.
    from_input_ = Conv2d<T>(params_, "gen.enc.from_input", 4, cfg_.channels_at(res), 1, rng);
    for (std::int64_t r = res; r >= 8; r /= 2) {
      const std::string p = "gen.enc.r" + std::to_string(r);
      EncBlock b;
      b.conv = Conv2d<T>(params_, p + ".conv", cfg_.channels_at(r), cfg_.channels_at(r), 3, rng);
      b.down = Conv2d<T>(params_, p + ".down", cfg_.channels_at(r), cfg_.channels_at(r / 2), 3, rng);
      enc_.push_back(std::move(b));
    }
    const std::int64_t c4 = cfg_.channels_at(4);
    enc4_ = Conv2d<T>(params_, "gen.enc.r4.conv", c4, c4, 3, rng);
    to_global_ = Linear<T>(params_, "gen.enc.to_global", c4 * 16, cfg_.global_code_dim(), rng);
    // Decoder.
    conv4_ = StyleConv<T>(params_, "gen.dec.r4.conv", sdim, c4, c4, rng);
    rgb4_ = ToRgb<T>(params_, "gen.dec.r4.to_rgb", sdim, c4, rng);
    for (std::int64_t r = 8; r <= res; r *= 2) {
      const std::string p = "gen.dec.r" + std::to_string(r);
      DecBlock b;
      b.res = r;
      b.conv_up = StyleConv<T>(params_, p + ".conv_up", sdim, cfg_.channels_at(r / 2), cfg_.channels_at(r), rng);
      b.skip = Conv2d<T>(params_, p + ".skip", cfg_.channels_at(r), cfg_.channels_at(r), 1, rng);
      b.conv = StyleConv<T>(params_, p + ".conv", sdim, cfg_.channels_at(r), cfg_.channels_at(r), rng);
      b.to_rgb = ToRgb<T>(params_, p + ".to_rgb", sdim, cfg_.channels_at(r), rng);
      dec_.push_back(std::move(b));
    }
  }
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;
  Generator(Generator&&) = default;

  std::int64_t style_layers() const { return cfg_.style_layers(); }
  const ModelConfig& config() const { return cfg_; }

  /// [N,3,H,W] image with holes already zeroed, [N,1,H,W] mask.
  EncodedInput<T> encode(const Var<T>& input, const Var<T>& mask) const {
    check_image(input.shape(), "generator input");
    if (mask.shape() != Shape{input.dim(0), 1, input.dim(2), input.dim(3)})
      throw ParameterError("generator mask must be [N,1,H,W], got " + to_string(mask.shape()));
    EncodedInput<T> out;
    Var<T> h = lrelu(from_input_(concat<T>({input, mask}, 1)));
    std::int64_t r = cfg_.resolution;
    for (const auto& b : enc_) {
      h = lrelu(b.conv(h));
      out.features[r] = h;
      h = lrelu(b.down(avg_pool2(h)));
      r /= 2;
    }
    h = lrelu(enc4_(h));
    out.features[4] = h;
    out.global_code = to_global_(reshape(h, {input.dim(0), cfg_.channels_at(4) * 16}));
    return out;
  }

  /// v_i = A_i([c, w_i]) for slot i (0-based). c is [N,2D], w_i is [N,D].
  Var<T> affine_style(const Var<T>& c, const Var<T>& w_i, std::int64_t i) const {
    const Linear<T>& a = affine_for_slot(i);
    return a(concat<T>({c, w_i}, 1));
  }

  Var<T> decode(const Var<T>& c, const Var<T>& code, const std::map<std::int64_t, Var<T>>& features,
                std::uint64_t noise_seed) const {
    const std::int64_t n = c.dim(0);
    if (code.shape() != Shape{n, style_layers(), cfg_.style_dim})
      throw ParameterError("style code must be [N," + std::to_string(style_layers()) + "," +
                           std::to_string(cfg_.style_dim) + "], got " + to_string(code.shape()));
    for (std::int64_t r = 4; r <= cfg_.resolution; r *= 2)
      if (!features.count(r)) throw ParameterError("feature pyramid lacks resolution " + std::to_string(r));
    auto slot = [&](std::int64_t i) {
      return concat<T>({c, reshape(slice(code, 1, i, 1), {n, cfg_.style_dim})}, 1);
    };
    NoiseSource<T> noise(noise_seed, n);
    Var<T> x = conv4_(features.at(4), slot(0), noise.next(4));
    Var<T> img = rgb4_(x, slot(1));
    std::int64_t b = 0;
    for (const auto& blk : dec_) {
      x = blk.conv_up(upsample2(x), slot(1 + 2 * b), noise.next(blk.res));
      x = add(x, blk.skip(features.at(blk.res)));
      x = blk.conv(x, slot(2 + 2 * b), noise.next(blk.res));
      img = add(upsample2(img), blk.to_rgb(x, slot(3 + 2 * b)));
      ++b;
    }
    return img;
  }

  /// Prediction before compositing.
  Var<T> predict(const Var<T>& input, const Var<T>& mask, const Var<T>& code,
                 std::uint64_t noise_seed) const {
    const EncodedInput<T> e = encode(input, mask);
    return decode(e.global_code, code, e.features, noise_seed);
  }

  /// encode -> decode -> composite.
  Var<T> generate(const Var<T>& input, const Tensor<T>& mask, const Var<T>& code,
                  std::uint64_t noise_seed) const {
    const Var<T> pred = predict(input, constant(mask), code, noise_seed);
    return composite(input, pred, mask);
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

 private:
  struct EncBlock {
    Conv2d<T> conv, down;
  };
  struct DecBlock {
    std::int64_t res = 0;
    StyleConv<T> conv_up;
    Conv2d<T> skip;
    StyleConv<T> conv;
    ToRgb<T> to_rgb;
  };

  void check_image(const Shape& s, const char* what) const {
    if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.resolution || s[3] != cfg_.resolution)
      throw ParameterError(std::string(what) + " must be [N,3," + std::to_string(cfg_.resolution) +
                           "," + std::to_string(cfg_.resolution) + "], got " + to_string(s));
  }

  const Linear<T>& affine_for_slot(std::int64_t i) const {
    if (i < 0 || i >= style_layers())
      throw ParameterError("style slot " + std::to_string(i) + " out of range [0," +
                           std::to_string(style_layers()) + ")");
    if (i == 0) return conv4_.affine;
    if (i == 1) return rgb4_.affine;
    const std::int64_t b = (i - 2) / 2;
    const auto& blk = dec_[static_cast<std::size_t>(b)];
    return (i - 2) % 2 == 0 ? blk.conv.affine : blk.to_rgb.affine;
  }

  ModelConfig cfg_;
  ParamSet<T> params_;
  Conv2d<T> from_input_;
  std::vector<EncBlock> enc_;
  Conv2d<T> enc4_;
  Linear<T> to_global_;
  StyleConv<T> conv4_;
  ToRgb<T> rgb4_;
  std::vector<DecBlock> dec_;
};

}  // namespace facefill
