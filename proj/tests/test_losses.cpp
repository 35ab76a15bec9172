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

#include <cmath>

#include "facefill/losses.hpp"
#include "facefill/svgl.hpp"
#include "grad_oracle.hpp"
#include "small_config.hpp"

namespace facefill {
namespace {

using testing::random_tensor;
using testing::tiny_config;

double softplus_ref(double x) { return std::log1p(std::exp(x)); }

Var<double> vec_var(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Var<double>::leaf(Tensor<double>({n, 1}, std::move(v)));
}

TEST(AdversarialLoss, DiscriminatorClosedForms) {
  const Var<double> zeros = vec_var({0, 0, 0});
  const Var<double> r1(Tensor<double>::scalar(0.7));
  EXPECT_NEAR(adv_loss_d(zeros, zeros).item(), 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(adv_loss_d(zeros, zeros, r1).item(), 2 * std::log(2.0) + 0.7, 1e-15);
  EXPECT_NEAR(adv_loss_d(vec_var({1e4, 2e4}), vec_var({-1e4, -3e4}), r1).item(), 0.7, 1e-15);
  std::mt19937_64 draw(31);
  const Tensor<double> real = random_tensor<double>({6, 1}, draw, -5, 5);
  const Tensor<double> fake = random_tensor<double>({6, 1}, draw, -5, 5);
  double want = 0;
  // -log sigmoid(r) - log(1 - sigmoid(f)), averaged.
  for (std::int64_t i = 0; i < 6; ++i) {
    const double sr = 1 / (1 + std::exp(-real[i])), sf = 1 / (1 + std::exp(-fake[i]));
    want += (-std::log(sr) - std::log(1 - sf)) / 6;
  }
  EXPECT_NEAR(adv_loss_d(Var<double>(real), Var<double>(fake)).item(), want, 1e-12);
}

TEST(AdversarialLoss, GeneratorClosedFormsAndGradientSign) {
  EXPECT_NEAR(adv_loss_g(vec_var({0})).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(adv_loss_g(vec_var({1e4})).item(), 0.0, 1e-15);
  for (double x = -30; x <= 30; x += 0.5) {
    const Var<double> l = vec_var({x});
    const double g = grad(adv_loss_g(l), {l})[0].value()[0];
    ASSERT_LT(g, 0.0) << x;
    ASSERT_NEAR(adv_loss_g(l).item(), softplus_ref(-x), 1e-12);
  }
}

TEST(CosineDistance, Cases) {
  const Var<double> a(Tensor<double>({2, 3}, {1, 0, 0, 1, 2, 3}));
  const Var<double> b(Tensor<double>({2, 3}, {0, 5, 0, 1, 2, 3}));
  const Tensor<double> d = cosine_distance(a, b).value();
  EXPECT_NEAR(d[0], 1.0, 1e-12);
  EXPECT_NEAR(d[1], 0.0, 1e-12);
  const Tensor<double> zero = cosine_distance(Var<double>(Tensor<double>({1, 3})), Var<double>(Tensor<double>({1, 3}))).value();
  EXPECT_TRUE(zero.all_finite());
  const Var<double> z = Var<double>::leaf(Tensor<double>({1, 3}));
  EXPECT_TRUE(grad(sum(cosine_distance(z, Var<double>(Tensor<double>({1, 3}, 1.0)))), {z})[0].value().all_finite());
}

TEST(IdentityLoss, SelfZeroAndDotProductOracle) {
  const ModelConfig cfg = tiny_config();
  Rng rng(32);
  IdentityNet<double> r(cfg, rng);
  r.freeze();
  std::mt19937_64 draw(32);
  const Tensor<double> a = random_tensor<double>({3, 3, 16, 16}, draw, -1, 1);
  const Tensor<double> b = random_tensor<double>({3, 3, 16, 16}, draw, -1, 1);
  EXPECT_NEAR(identity_loss(Var<double>(a), Var<double>(a), r).item(), 0.0, 1e-12);
  const Tensor<double> ea = r(Var<double>(a)).value(), eb = r(Var<double>(b)).value();
  const std::int64_t k = cfg.identity_dim;
  double want = 0;
  for (std::int64_t n = 0; n < 3; ++n) {
    double dot = 0, na = 0, nb = 0;
    for (std::int64_t i = 0; i < k; ++i) {
      dot += ea[n * k + i] * eb[n * k + i];
      na += ea[n * k + i] * ea[n * k + i];
      nb += eb[n * k + i] * eb[n * k + i];
    }
    want += (1 - dot / (std::sqrt(na) * std::sqrt(nb))) / 3;
  }
  const double got = identity_loss(Var<double>(a), Var<double>(b), r).item();
  EXPECT_NEAR(got, want, 1e-7);
  EXPECT_GE(got, 0.0);
  EXPECT_LE(got, 2.0);
}

struct PerceptualFixture {
  ModelConfig cfg = tiny_config();
  Rng rng{33};
  PerceptualNet<double> f{cfg, rng};
  std::mt19937_64 draw{33};
};

TEST(LpipsLoss, GatingAndSelfZero) {
  PerceptualFixture p;
  const Tensor<double> a = random_tensor<double>({2, 3, 16, 16}, p.draw, -1, 1);
  const Tensor<double> b = random_tensor<double>({2, 3, 16, 16}, p.draw, -1, 1);
  const Var<double> x = Var<double>::leaf(a);
  const Var<double> off = lpips_loss(x, Var<double>(b), p.f, {false, false});
  EXPECT_EQ(off.item(), 0.0);
  EXPECT_FALSE(off.requires_grad());
  EXPECT_NEAR(lpips_loss(Var<double>(a), Var<double>(a), p.f, {true, true}).item(), 0.0, 1e-20);
  const Tensor<double> d = p.f.distance(Var<double>(a), Var<double>(b)).value();
  EXPECT_NEAR(lpips_loss(Var<double>(a), Var<double>(b), p.f, {true, false}).item(), d[0] / 2, 1e-12);
  EXPECT_NEAR(lpips_loss(Var<double>(a), Var<double>(b), p.f, {true, true}).item(), (d[0] + d[1]) / 2, 1e-12);
  EXPECT_GT(d[0], 0.0);
  EXPECT_THROW(lpips_loss(x, Var<double>(b), p.f, {true}), ParameterError);
  // The unflagged sample receives no gradient.
  const Tensor<double> g = grad(lpips_loss(x, Var<double>(b), p.f, {true, false}), {x})[0].value();
  for (std::int64_t i = 3 * 256; i < 6 * 256; ++i) ASSERT_EQ(g[i], 0.0);
}

TEST(LpipsLoss, ConfidenceGateRestrictsGradientToHole) {
  PerceptualFixture p;
  const BinaryMask hole = center_mask(16, 16, 0.5);
  const WeightMask mw = confidence_weight(hole, 5, 5.0 / 3.0);
  const Tensor<double> out = random_tensor<double>({1, 3, 16, 16}, p.draw, -1, 1);
  const Tensor<double> gt = random_tensor<double>({1, 3, 16, 16}, p.draw, -1, 1);
  const Var<double> x = Var<double>::leaf(out);
  const Tensor<double> g =
      grad(lpips_loss(svgl_apply(x, mw), Var<double>(gt), p.f, {true}), {x})[0].value();
  double inside = 0;
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < 16; ++y)
      for (std::int64_t k = 0; k < 16; ++k) {
        if (!hole.at(y, k)) ASSERT_EQ(g.at(0, c, y, k), 0.0);
        else inside += std::abs(g.at(0, c, y, k));
      }
  EXPECT_GT(inside, 0.0);
}

TEST(LpipsLoss, PerPixelSurrogateRatioEqualsWeight) {
  std::mt19937_64 draw(34);
  const BinaryMask hole = center_mask(16, 16, 0.5);
  const WeightMask mw = confidence_weight(hole, 5, 5.0 / 3.0);
  const Tensor<double> out = random_tensor<double>({1, 3, 16, 16}, draw, -1, 1);
  const Tensor<double> gt = random_tensor<double>({1, 3, 16, 16}, draw, -1, 1);
  auto loss = [&](const Var<double>& v) { return sum(square(sub(v, constant(gt)))); };
  const Var<double> x = Var<double>::leaf(out);
  const Tensor<double> gated = grad(loss(svgl_apply(x, mw)), {x})[0].value();
  const Tensor<double> plain = grad(loss(x), {x})[0].value();
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < 16; ++y)
      for (std::int64_t k = 0; k < 16; ++k)
        ASSERT_NEAR(gated.at(0, c, y, k), plain.at(0, c, y, k) * mw.at(y, k), 1e-15);
  // Weight grows from the hole border toward its interior.
  EXPECT_LT(mw.at(4, 4), mw.at(6, 6));
  EXPECT_LT(mw.at(6, 6), mw.at(8, 8) + 1e-12);
}

TEST(AttributeLoss, CodeLevelOracles) {
  std::mt19937_64 draw(35);
  const std::int64_t n = 3, L = 10, D = 6;
  const Tensor<double> a = random_tensor<double>({n, L, D}, draw, -1, 1);
  const Tensor<double> b = random_tensor<double>({n, L, D}, draw, -1, 1);
  const MixSelector phi = MixSelector::coarse_stochastic(L);
  EXPECT_EQ(attribute_loss_from_codes(Var<double>(a), Var<double>(a), phi).item(), 0.0);
  auto layer_dist = [&](std::int64_t s, std::int64_t l) {
    double acc = 0;
    for (std::int64_t d = 0; d < D; ++d) {
      const double e = a[(s * L + l) * D + d] - b[(s * L + l) * D + d];
      acc += e * e;
    }
    return std::sqrt(acc);
  };
  double want = 0;
  for (std::int64_t s = 0; s < n; ++s) {
    double per = 0;
    for (std::int64_t l = 4; l < L; ++l) per += layer_dist(s, l);
    want += per / 6 / n;
  }
  EXPECT_NEAR(attribute_loss_from_codes(Var<double>(a), Var<double>(b), phi).item(), want, 1e-12);
  double single = 0;
  for (std::int64_t s = 0; s < n; ++s) single += layer_dist(s, 7) / n;
  EXPECT_NEAR(attribute_loss_from_codes(Var<double>(a), Var<double>(b), MixSelector::range(L, 8, 8)).item(), single, 1e-12);
  EXPECT_THROW(attribute_loss_from_codes(Var<double>(a), Var<double>(b), MixSelector::all(L, false)), ParameterError);
  EXPECT_THROW(attribute_loss_from_codes(Var<double>(a), Var<double>(b), MixSelector::all(L - 1, true)), ParameterError);
}

TEST(AttributeLoss, IndependentOfStochasticLayers) {
  std::mt19937_64 draw(36);
  const Tensor<double> w_bar = random_tensor<double>({2, 10, 4}, draw, -1, 1);
  const Var<double> exemplar(random_tensor<double>({2, 10, 4}, draw, -1, 1));
  const MixSelector phi = MixSelector::coarse_stochastic(10);
  const double a = attribute_loss_from_codes(Var<double>(w_bar), mix_styles(exemplar, Var<double>(random_tensor<double>({2, 10, 4}, draw, -1, 1)), phi), phi).item();
  const double b = attribute_loss_from_codes(Var<double>(w_bar), mix_styles(exemplar, Var<double>(random_tensor<double>({2, 10, 4}, draw, -1, 1)), phi), phi).item();
  EXPECT_EQ(a, b);
}

TEST(AttributeLoss, ImageLevelSelfZeroAndReverseGate) {
  const ModelConfig cfg = tiny_config();
  Rng rng(37);
  StyleEncoder<double> e(cfg, rng);
  e.freeze();
  std::mt19937_64 draw(37);
  const Tensor<double> img = random_tensor<double>({1, 3, 16, 16}, draw, -1, 1);
  const MixSelector phi = MixSelector::coarse_stochastic(cfg.style_layers());
  const Var<double> own = e(Var<double>(img));
  EXPECT_EQ(attribute_loss(Var<double>(img), own, phi, e).item(), 0.0);

  const BinaryMask hole = center_mask(16, 16, 0.75);
  const WeightMask mw = confidence_weight(hole, 3, 1.0);
  const WeightMask rw = reverse_weight(mw, hole);
  const Var<double> target(random_tensor<double>({1, cfg.style_layers(), cfg.style_dim}, draw, -1, 1));
  const Var<double> x = Var<double>::leaf(img);
  const Tensor<double> g = grad(attribute_loss(svgl_apply(x, rw), target, phi, e), {x})[0].value();
  double at_border = 0;
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < 16; ++y)
      for (std::int64_t k = 0; k < 16; ++k) {
        if (rw.at(y, k) == 0.0) ASSERT_EQ(g.at(0, c, y, k), 0.0);
        else at_border += std::abs(g.at(0, c, y, k));
      }
  EXPECT_GT(at_border, 0.0);
  // Known pixels and the deep interior both carry zero reverse weight.
  EXPECT_EQ(rw.at(0, 0), 0.0);
  EXPECT_NEAR(rw.at(8, 8), 0.0, 1e-12);
}

TEST(TotalObjective, WeightsCombineLinearly) {
  const Var<double> adv = Var<double>::leaf(Tensor<double>::scalar(0.9));
  const Var<double> id = Var<double>::leaf(Tensor<double>::scalar(0.3));
  const Var<double> lp = Var<double>::leaf(Tensor<double>::scalar(1.7));
  const Var<double> at = Var<double>::leaf(Tensor<double>::scalar(2.5));
  const GeneratorLossParts<double> parts{adv, id, lp, at};
  EXPECT_EQ(total_objective(parts, LossWeights{0, 0, 0, 10}).item(), 0.9);
  const LossWeights def;
  EXPECT_EQ(def.lambda_id, 0.1);
  EXPECT_EQ(def.lambda_lpips, 0.5);
  EXPECT_EQ(def.lambda_attr, 0.1);
  EXPECT_EQ(def.gamma, 10.0);
  EXPECT_NEAR(total_objective(parts, def).item(), 0.9 + 0.1 * 0.3 + 0.5 * 1.7 + 0.1 * 2.5, 1e-15);
  EXPECT_THROW(total_objective(parts, LossWeights{-1, 0, 0, 0}), ParameterError);
}

TEST(TotalObjective, DoublingAttributeWeightDoublesItsGradient) {
  const ModelConfig cfg = tiny_config();
  Rng rng(38);
  StyleEncoder<double> e(cfg, rng);
  e.freeze();
  std::mt19937_64 draw(38);
  const Var<double> x = Var<double>::leaf(random_tensor<double>({1, 3, 16, 16}, draw, -1, 1));
  const Var<double> target(random_tensor<double>({1, cfg.style_layers(), cfg.style_dim}, draw, -1, 1));
  const MixSelector phi = MixSelector::coarse_stochastic(cfg.style_layers());
  auto attr_grad = [&](double lambda) {
    GeneratorLossParts<double> parts;
    parts.adv = Var<double>(Tensor<double>::scalar(0.0));
    parts.attr = attribute_loss(x, target, phi, e);
    return grad(total_objective(parts, LossWeights{0.1, 0.5, lambda, 10}), {x})[0].value();
  };
  const Tensor<double> g1 = attr_grad(0.1), g2 = attr_grad(0.2);
  for (std::int64_t i = 0; i < g1.numel(); ++i) ASSERT_NEAR(g2[i], 2 * g1[i], 1e-15 + 1e-12 * std::abs(g1[i]));
  EXPECT_GT(max_abs(g1), 0.0);
}

TEST(FrozenNetworks, NoParameterGradients) {
  const ModelConfig cfg = tiny_config();
  Rng rng(39);
  IdentityNet<double> r(cfg, rng);
  r.freeze();
  PerceptualNet<double> f(cfg, rng);
  StyleEncoder<double> e(cfg, rng);
  e.freeze();
  for (const auto* ps : {&r.params(), &f.params(), &e.params()})
    for (const auto& v : ps->vars()) EXPECT_FALSE(v.requires_grad());
  std::mt19937_64 draw(39);
  const Var<double> x = Var<double>::leaf(random_tensor<double>({1, 3, 16, 16}, draw, -1, 1));
  const Var<double> l = add(add(sum(r(x)), sum(f.distance(x, constant(Tensor<double>({1, 3, 16, 16}))))), sum(e(x)));
  EXPECT_TRUE(l.requires_grad());
  const auto g = grad(l, e.params().vars());
  for (const auto& gi : g) EXPECT_EQ(max_abs(gi.value()), 0.0);
}

}  // namespace
}  // namespace facefill
