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

#include "facefill/dataset.hpp"
#include "facefill/discriminator.hpp"
#include "facefill/embeddings.hpp"
#include "facefill/generator.hpp"
#include "facefill/optim.hpp"
#include "facefill/styles.hpp"

namespace facefill {

/// Every network of a model, constructed in a fixed order from one seed.
/// G, f and D train; E, R and F are frozen stand-ins.
struct Networks {
  ModelConfig cfg;
  Rng init_rng;
  Generator<float> G;
  MappingNetwork<float> f;
  Discriminator<float> D;
  StyleEncoder<float> E;
  IdentityNet<float> R;
  PerceptualNet<float> F;

  Networks(const ModelConfig& c, std::uint64_t seed)
      : cfg(c), init_rng(seed), G(cfg, init_rng), f(cfg, init_rng), D(cfg, init_rng), E(cfg, init_rng),
        R(cfg, init_rng), F(cfg, init_rng) {}

  void freeze_stand_ins() {
    E.freeze();
    R.freeze();
  }

  /// Named parameter sets in checkpoint order.
  std::vector<std::pair<std::string, ParamSet<float>*>> sets() {
    return {{"G", &G.params()}, {"f", &f.params()}, {"D", &D.params()},
            {"E", &E.params()}, {"R", &R.params()}, {"F", &F.params()}};
  }

  /// Critic input: the image, plus the mask channel when configured.
  Var<float> critic(const Var<float>& img, const Tensor<float>& mask) const {
    return cfg.d_mask_conditioned ? D(concat<float>({img, constant(mask)}, 1)) : D(img);
  }
};

// ---------------------------------------------------------------------------
// Stand-in pretraining.

struct PretrainReport {
  std::string identity;  // what R was trained on
  std::string encoder;   // what E was trained on
  double identity_final_loss = 0, encoder_final_loss = 0;
};

/// Trains R as a cosine-softmax classifier over dataset identities (scale
/// 10), then discards the class weights.
inline double pretrain_identity(IdentityNet<float>& R, const Dataset& data, std::int64_t steps,
                                std::int64_t batch, Rng& rng) {
  int classes = 0;
  for (int l : data.labels) classes = std::max(classes, l + 1);
  if (classes < 2 || steps == 0) return 0.0;
  ParamSet<float> head_params;
  const Var<float> classes_w =
      head_params.add("class_weights", randn<float>({classes, R.params().get("identity.head.bias").numel()}, rng));
  Adam<float> opt(join_params<float>(R.params(), head_params), AdamConfig{0.002, 0.9, 0.99, 1e-8});
  std::vector<std::int64_t> pool;
  for (std::int64_t i = 0; i < data.size(); ++i)
    if (data.labels[static_cast<std::size_t>(i)] >= 0) pool.push_back(i);
  double last = 0;
  for (std::int64_t s = 0; s < steps; ++s) {
    std::vector<std::int64_t> idx;
    Tensor<float> onehot({batch, classes});
    for (std::int64_t b = 0; b < batch; ++b) {
      idx.push_back(pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))]);
      onehot[b * classes + data.labels[static_cast<std::size_t>(idx.back())]] = 1.0f;
    }
    auto unit = [](const Var<float>& e) { return div(e, add_scalar(norm_axes(e, {1}), 1e-6f)); };
    const Var<float> emb = unit(R(Var<float>(data.gather(idx))));
    const Var<float> logits = scale(matmul(emb, unit(classes_w), false, true), 10.0f);
    const Var<float> loss = scale(sum(mul(log_softmax(logits), constant(onehot))), -1.0f / static_cast<float>(batch));
    last = loss.item();
    opt.step(grad(loss, opt.vars()));
  }
  return last;
}

/// Trains E as the encoder half of an autoencoder whose decoder exists only
/// for pretraining.
inline double pretrain_encoder(StyleEncoder<float>& E, const ModelConfig& cfg, const Dataset& data,
                               std::int64_t steps, std::int64_t batch, Rng& rng) {
  if (steps == 0) return 0.0;
  ParamSet<float> dec;
  const std::int64_t L = cfg.style_layers(), D = cfg.style_dim, c = 32;
  const Linear<float> fc(dec, "aux.fc", L * D, c * 16, rng);
  std::vector<Conv2d<float>> ups;
  for (std::int64_t r = 8; r <= cfg.resolution; r *= 2)
    ups.emplace_back(dec, "aux.up" + std::to_string(r), c, c, 3, rng);
  const Conv2d<float> to_rgb(dec, "aux.to_rgb", c, 3, 1, rng);
  Adam<float> opt(join_params<float>(E.params(), dec), AdamConfig{0.002, 0.9, 0.99, 1e-8});
  double last = 0;
  for (std::int64_t s = 0; s < steps; ++s) {
    std::vector<std::int64_t> idx;
    for (std::int64_t b = 0; b < batch; ++b) idx.push_back(rng.uniform_int(0, data.size() - 1));
    const Var<float> x(data.gather(idx));
    const Var<float> code = E(x);
    Var<float> h = lrelu(reshape(fc(reshape(code, {batch, L * D})), {batch, c, 4, 4}));
    for (const auto& u : ups) h = lrelu(u(upsample2(h)));
    const Var<float> loss = mean(square(sub(to_rgb(h), x)));
    last = loss.item();
    opt.step(grad(loss, opt.vars()));
  }
  return last;
}

}  // namespace facefill
