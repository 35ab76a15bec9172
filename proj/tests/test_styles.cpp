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

#include <gtest/gtest.h>

#include "facefill/styles.hpp"
#include "grad_oracle.hpp"
#include "small_config.hpp"

namespace facefill {
namespace {

using testing::random_tensor;
using testing::tiny_config;

Tensor<float> random_code(std::mt19937_64& gen, std::int64_t n, std::int64_t l, std::int64_t d) {
  return random_tensor<float>({n, l, d}, gen, -2, 2);
}

TEST(MapLatent, DeterministicNonOddAndBatchConsistent) {
  ModelConfig cfg;  // full 512-wide mapping
  Rng rng(1);
  const MappingNetwork<float> f(cfg, rng);
  const Tensor<float> z = sample_latents<float>(rng, 2, cfg.style_dim);
  const Tensor<float> a = f(Var<float>(z)).value();
  EXPECT_EQ(a, f(Var<float>(z)).value());
  EXPECT_EQ(a.shape(), (Shape{2, 10, 512}));
  const Tensor<float> neg_z = map(z, [](float v) { return -v; });
  EXPECT_NE(a, f(Var<float>(neg_z)).value());
  for (std::int64_t n = 0; n < 2; ++n) {
    Tensor<float> single({1, 512});
    for (std::int64_t d = 0; d < 512; ++d) single[d] = z[n * 512 + d];
    const Tensor<float> s = f(Var<float>(single)).value();
    for (std::int64_t l = 0; l < 10; ++l)
      for (std::int64_t d = 0; d < 512; ++d)
        ASSERT_NEAR(s[l * 512 + d], a[(n * 10 + l) * 512 + d], 1e-5f);
  }
  // Every layer carries the same mapped vector.
  for (std::int64_t d = 0; d < 512; ++d) ASSERT_EQ(a[d], a[9 * 512 + d]);
}

TEST(MapLatent, RejectsBadInput) {
  const ModelConfig cfg = tiny_config();
  Rng rng(2);
  const MappingNetwork<float> f(cfg, rng);
  Tensor<float> z({1, cfg.style_dim});
  z[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(f(Var<float>(z)), NumericError);
  EXPECT_THROW(f(Var<float>(Tensor<float>({1, 5}))), ParameterError);
}

TEST(MapLatent, AverageTracking) {
  const ModelConfig cfg = tiny_config();
  Rng rng(3);
  MappingNetwork<float> f(cfg, rng);
  Tensor<float> batch({2, cfg.style_dim});
  for (std::int64_t d = 0; d < cfg.style_dim; ++d) {
    batch[d] = 1.0f;
    batch[cfg.style_dim + d] = 3.0f;
  }
  f.track_average(batch, 0.5f);
  for (std::int64_t d = 0; d < cfg.style_dim; ++d) EXPECT_FLOAT_EQ(f.w_avg()[d], 1.0f);
  f.track_average(batch);
  for (std::int64_t d = 0; d < cfg.style_dim; ++d) EXPECT_NEAR(f.w_avg()[d], 1.0f + 0.005f * 1.0f, 1e-6);
  EXPECT_EQ(f.average_code().shape(), (Shape{1, 1, cfg.style_dim}));
}

TEST(MixSelector, ConstructorsAndParsing) {
  EXPECT_EQ(MixSelector::coarse_stochastic(10).str(), "0000111111");
  EXPECT_EQ(MixSelector::coarse_stochastic(10).count(), 6);
  EXPECT_EQ(MixSelector::all(4, true).str(), "1111");
  EXPECT_EQ(MixSelector::all(4, false).count(), 0);
  EXPECT_EQ(MixSelector::range(6, 2, 3).str(), "011000");
  EXPECT_EQ(MixSelector::parse("1010").str(), "1010");
  EXPECT_THROW(MixSelector::parse("10a1"), ParameterError);
  EXPECT_THROW(MixSelector::parse(""), ParameterError);
  EXPECT_THROW(MixSelector::range(6, 0, 3), ParameterError);
  EXPECT_THROW(MixSelector::range(6, 4, 3), ParameterError);
  EXPECT_THROW(MixSelector::range(6, 2, 7), ParameterError);
}

TEST(MixStyles, SelectsWholeLayers) {
  std::mt19937_64 gen(4);
  const std::int64_t L = 10, D = 7;
  const Var<float> w(random_code(gen, 2, L, D)), wt(random_code(gen, 2, L, D));
  EXPECT_EQ(mix_styles(w, wt, MixSelector::all(L, true)).value(), w.value());
  EXPECT_EQ(mix_styles(w, wt, MixSelector::all(L, false)).value(), wt.value());
  const MixSelector phi = MixSelector::coarse_stochastic(L);
  const Tensor<float> m = mix_styles(w, wt, phi).value();
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t l = 0; l < L; ++l)
      for (std::int64_t d = 0; d < D; ++d) {
        const std::int64_t i = (n * L + l) * D + d;
        ASSERT_EQ(m[i], l < 4 ? wt.value()[i] : w.value()[i]);
      }
  // Idempotent with the same selector.
  EXPECT_EQ(mix_styles(Var<float>(m), wt, phi).value(), m);
  EXPECT_THROW(mix_styles(w, Var<float>(random_code(gen, 2, L - 1, D)), phi), ParameterError);
  EXPECT_THROW(mix_styles(w, wt, MixSelector::coarse_stochastic(8)), ParameterError);
}

TEST(MixStyles, GradientRoutesToSelectedSource) {
  const Var<double> w = Var<double>::leaf(Tensor<double>({1, 3, 2}, 1.0));
  const Var<double> wt = Var<double>::leaf(Tensor<double>({1, 3, 2}, 2.0));
  const auto g = grad(sum(mix_styles(w, wt, MixSelector::parse("101"))), {w, wt});
  EXPECT_EQ(g[0].value().vec(), (std::vector<double>{1, 1, 0, 0, 1, 1}));
  EXPECT_EQ(g[1].value().vec(), (std::vector<double>{0, 0, 1, 1, 0, 0}));
}

TEST(CrossoverMix, RangesAndEquivalence) {
  std::mt19937_64 gen(5);
  const std::int64_t L = 10, D = 5;
  const Var<float> a(random_code(gen, 1, L, D)), b(random_code(gen, 1, L, D));
  EXPECT_EQ(crossover_mix(a, b, 1, L).value(), b.value());
  const Tensor<float> one = crossover_mix(a, b, 3, 3).value();
  std::int64_t replaced = 0;
  for (std::int64_t l = 0; l < L; ++l) {
    bool from_b = true;
    for (std::int64_t d = 0; d < D; ++d) from_b = from_b && one[l * D + d] == b.value()[l * D + d];
    replaced += from_b;
  }
  EXPECT_EQ(replaced, 1);
  for (std::int64_t i = 1; i <= L; ++i)
    for (std::int64_t j = i; j <= L; ++j) {
      std::string bits(static_cast<std::size_t>(L), '0');
      for (std::int64_t k = i; k <= j; ++k) bits[static_cast<std::size_t>(k - 1)] = '1';
      ASSERT_EQ(crossover_mix(a, b, i, j).value(), mix_styles(b, a, MixSelector::parse(bits)).value());
    }
  EXPECT_THROW(crossover_mix(a, b, 0, 2), ParameterError);
  EXPECT_THROW(crossover_mix(a, b, 5, 4), ParameterError);
  EXPECT_THROW(crossover_mix(a, b, 1, L + 1), ParameterError);
}

TEST(Truncate, EndpointsAndMidpoint) {
  std::mt19937_64 gen(6);
  const Var<double> w(random_tensor<double>({2, 4, 3}, gen, -2, 2));
  const Tensor<double> avg = random_tensor<double>({1, 1, 3}, gen, -1, 1);
  EXPECT_EQ(truncate(w, avg, 1.0).value(), w.value());
  const Tensor<double> t0 = truncate(w, avg, 0.0).value();
  const Tensor<double> t5 = truncate(w, avg, 0.5).value();
  for (std::int64_t i = 0; i < w.numel(); ++i) {
    EXPECT_EQ(t0[i], avg[i % 3]);
    EXPECT_NEAR(t5[i], (w.value()[i] + avg[i % 3]) / 2, 1e-15);
  }
  EXPECT_THROW(truncate(w, avg, 1.5), ParameterError);
  EXPECT_THROW(truncate(w, avg, -0.1), ParameterError);
}

TEST(MixingRegularization, ProbabilityExtremes) {
  const ModelConfig cfg = tiny_config();
  Rng rng(7);
  const MappingNetwork<float> f(cfg, rng);
  const Tensor<float> z1 = sample_latents<float>(rng, 4, cfg.style_dim);
  const Tensor<float> z2 = sample_latents<float>(rng, 4, cfg.style_dim);
  const MixedCode<float> none = mixing_regularization(z1, z2, rng, 0.0, f);
  EXPECT_EQ(none.code.value(), f(Var<float>(z1)).value());
  for (auto c : none.cutoff) EXPECT_EQ(c, -1);
  const Tensor<float> w1 = f(Var<float>(z1)).value(), w2 = f(Var<float>(z2)).value();
  for (int trial = 0; trial < 20; ++trial) {
    const MixedCode<float> all = mixing_regularization(z1, z2, rng, 1.0, f);
    const std::int64_t L = cfg.style_layers(), D = cfg.style_dim;
    for (std::int64_t n = 0; n < 4; ++n) {
      const std::int64_t cut = all.cutoff[static_cast<std::size_t>(n)];
      ASSERT_GE(cut, 1);
      ASSERT_LE(cut, L - 1);
      for (std::int64_t l = 0; l < L; ++l) {
        const std::int64_t i = (n * L + l) * D;
        ASSERT_EQ(all.code.value()[i], l < cut ? w1[i] : w2[i]);
      }
    }
  }
  EXPECT_THROW(mixing_regularization(z1, z2, rng, 1.2, f), ParameterError);
}

TEST(MixingRegularization, HalfProbabilityBernoulliRate) {
  ModelConfig cfg = tiny_config();
  cfg.style_dim = 4;
  cfg.mapping_layers = 1;
  Rng rng(8);
  const MappingNetwork<float> f(cfg, rng);
  const Tensor<float> z = sample_latents<float>(rng, 1, cfg.style_dim);
  int crossed = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) crossed += mixing_regularization(z, z, rng, 0.5, f).cutoff[0] >= 0;
  EXPECT_NEAR(crossed / static_cast<double>(trials), 0.5, 0.02);
}

TEST(StyleEncoder, DeterministicShapeAndInputGradients) {
  const ModelConfig cfg = tiny_config();
  Rng rng(9);
  StyleEncoder<float> e(cfg, rng);
  e.freeze();
  std::mt19937_64 gen(9);
  const Tensor<float> img = random_tensor<float>({2, 3, 16, 16}, gen, -1, 1);
  const Var<float> x = Var<float>::leaf(img);
  const Var<float> code = e(x);
  EXPECT_EQ(code.shape(), (Shape{2, cfg.style_layers(), cfg.style_dim}));
  EXPECT_EQ(code.value(), e(Var<float>(img)).value());
  const std::string before = e.params().hash();
  const auto g = grad(sum(square(code)), {x});
  EXPECT_GT(max_abs(g[0].value()), 0.0f);
  for (const auto& p : e.params().vars()) EXPECT_FALSE(p.requires_grad());
  EXPECT_EQ(before, e.params().hash());
  EXPECT_THROW(e(Var<float>(Tensor<float>({1, 3, 8, 8}))), ParameterError);
}

}  // namespace
}  // namespace facefill
