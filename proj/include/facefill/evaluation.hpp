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

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "facefill/dataset.hpp"
#include "facefill/networks.hpp"
#include "facefill/pyramid.hpp"

namespace facefill {

/// Rows are samples.
using FeatureSet = Eigen::MatrixXd;

/// Frozen random convolutional pyramid; a feature vector is the global
/// average of every level's activation, concatenated. Weights depend only on
/// a fixed seed, so features are comparable across runs with equal hash.
class FeatureExtractor {
 public:
  static constexpr std::uint64_t kSeed = 0x5EEDF1D0ULL;

  FeatureExtractor() {
    Rng rng(kSeed);
    const std::vector<std::int64_t> widths{8, 16, 16, 24};
    pyramid_ = DownPyramid<float>(params_, "fid.pyramid", 3, widths, rng);
    params_.freeze();
    // Level i emits the width of level i + 1; the last keeps its own.
    for (std::size_t i = 0; i < widths.size(); ++i) dim_ += widths[std::min(i + 1, widths.size() - 1)];
  }

  std::int64_t dim() const { return dim_; }
  std::string hash() const { return params_.hash(); }

  /// [N,3,H,W] -> N x dim, processed in chunks of `batch`.
  FeatureSet extract(const Tensor<float>& images, std::int64_t batch = 16) const {
    NoGrad no_grad;
    const std::int64_t n = images.dim(0), per = images.numel() / std::max<std::int64_t>(n, 1);
    FeatureSet out(n, dim_);
    for (std::int64_t s = 0; s < n; s += batch) {
      const std::int64_t k = std::min(batch, n - s);
      Shape shape = images.shape();
      shape[0] = k;
      Tensor<float> chunk(shape);
      std::copy_n(images.data() + s * per, k * per, chunk.data());
      std::int64_t col = 0;
      for (const Var<float>& level : pyramid_.features(Var<float>(chunk))) {
        const Tensor<float> pooled = mean_axes(level, {2, 3}).value();
        const std::int64_t c = level.dim(1);
        for (std::int64_t i = 0; i < k; ++i)
          for (std::int64_t j = 0; j < c; ++j) out(s + i, col + j) = pooled[i * c + j];
        col += c;
      }
    }
    return out;
  }

 private:
  ParamSet<float> params_;
  DownPyramid<float> pyramid_;
  std::int64_t dim_ = 0;
};

/// Frechet distance between Gaussian fits of two feature sets. Covariances
/// (unbiased) are regularized by eps * I; the trace of the square root of
/// Sa*Sb is taken from the eigenvalues of the symmetric sqrt(Sa) Sb sqrt(Sa).
inline double fid(const FeatureSet& a, const FeatureSet& b, double eps = 1e-6) {
  if (a.rows() < 2 || b.rows() < 2) throw ParameterError("FID needs at least two samples per set");
  if (a.cols() != b.cols()) throw ParameterError("FID feature dimensions differ");
  if (!a.allFinite() || !b.allFinite()) throw NumericError("non-finite features");
  const Eigen::Index d = a.cols();
  auto stats = [&](const FeatureSet& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += eps;
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd sa, sb;
  stats(a, mu_a, sa);
  stats(b, mu_b, sb);

  const double tol = 1e-8 * std::max({1.0, sa.trace(), sb.trace()});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(sa);
  if (ea.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  if (ea.eigenvalues().minCoeff() < -tol)
    throw NumericError("covariance not positive semi-definite (min eigenvalue " +
                       std::to_string(ea.eigenvalues().minCoeff()) + ")");
  const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd m = sqrt_a * sb * sqrt_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
  if (em.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  if (em.eigenvalues().minCoeff() < -tol * static_cast<double>(d))
    throw NumericError("covariance product not positive semi-definite (min eigenvalue " +
                       std::to_string(em.eigenvalues().minCoeff()) + ")");
  const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return std::max(value, 0.0);
}

struct IdsScores {
  double u_ids = 0, p_ids = 0;
};

/// Soft-margin linear SVM (hinge loss, C = 1, bias as a constant feature)
/// trained by dual coordinate descent in a fixed sample order. Features are
/// standardized over the union of both sets first. Returns w (last entry is
/// the bias) in standardized coordinates.
struct LinearSvm {
  Eigen::VectorXd w;
  Eigen::VectorXd mean, inv_std;

  double decision(const Eigen::RowVectorXd& x) const {
    const Eigen::VectorXd z = (x.transpose() - mean).cwiseProduct(inv_std);
    return z.dot(w.head(z.size())) + w(w.size() - 1);
  }

  static LinearSvm fit(const FeatureSet& pos, const FeatureSet& neg, double C = 1.0, int max_epochs = 1000,
                       double tol = 1e-6) {
    const Eigen::Index d = pos.cols();
    FeatureSet all(pos.rows() + neg.rows(), d);
    all << pos, neg;
    LinearSvm svm;
    svm.mean = all.colwise().mean().transpose();
    const Eigen::MatrixXd centered = all.rowwise() - svm.mean.transpose();
    const Eigen::VectorXd var = centered.colwise().squaredNorm().transpose() / static_cast<double>(all.rows());
    if (var.maxCoeff() <= 0.0) throw NumericError("degenerate features: all samples identical");
    svm.inv_std = var.unaryExpr([](double v) { return v > 0 ? 1.0 / std::sqrt(v) : 0.0; });

    const Eigen::Index n = all.rows();
    Eigen::MatrixXd x(n, d + 1);
    x.leftCols(d) = centered * svm.inv_std.asDiagonal();
    x.col(d).setOnes();
    Eigen::VectorXd y(n);
    y.head(pos.rows()).setOnes();
    y.tail(neg.rows()).setConstant(-1.0);
    const Eigen::VectorXd qii = x.rowwise().squaredNorm();
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    svm.w = Eigen::VectorXd::Zero(d + 1);
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
      double max_pg = -1e300, min_pg = 1e300;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double g = y(i) * x.row(i).dot(svm.w) - 1.0;
        double pg = g;
        if (alpha(i) == 0.0) pg = std::min(g, 0.0);
        else if (alpha(i) == C) pg = std::max(g, 0.0);
        max_pg = std::max(max_pg, pg);
        min_pg = std::min(min_pg, pg);
        if (pg != 0.0) {
          const double old = alpha(i);
          alpha(i) = std::clamp(old - g / qii(i), 0.0, C);
          svm.w += (alpha(i) - old) * y(i) * x.row(i).transpose();
        }
      }
      if (max_pg - min_pg < tol) break;
    }
    return svm;
  }
};

/// U-IDS: misclassification rate of a linear SVM separating real from fake.
/// P-IDS: fraction of pairs whose fake scores as more real than its real.
/// A decision value exactly on the boundary, or an exact pair tie, counts
/// one half.
inline IdsScores ids_scores(const FeatureSet& real, const FeatureSet& fake) {
  if (real.rows() != fake.rows() || real.cols() != fake.cols())
    throw ParameterError("IDS needs paired feature sets of equal shape");
  if (real.rows() < 1) throw ParameterError("IDS needs samples");
  const LinearSvm svm = LinearSvm::fit(real, fake);
  double errors = 0, wins = 0;
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    const double r = svm.decision(real.row(i)), f = svm.decision(fake.row(i));
    errors += r < 0 ? 1.0 : (r == 0 ? 0.5 : 0.0);
    errors += f > 0 ? 1.0 : (f == 0 ? 0.5 : 0.0);
    wins += f > r ? 1.0 : (f == r ? 0.5 : 0.0);
  }
  const auto n = static_cast<double>(real.rows());
  return {errors / (2 * n), wins / n};
}

// ---------------------------------------------------------------------------
// Binned protocol.

struct MaskBin {
  std::string name;
  double lo = 0, hi = 0;  // ratio range [lo, hi); ignored for the center bin
  bool center = false;
};

/// 10%-wide free-form bins from 10% to 70%, plus the centered square hole.
inline std::vector<MaskBin> default_bins() {
  std::vector<MaskBin> bins;
  for (int k = 1; k < 7; ++k) {
    const double lo = k / 10.0, hi = (k + 1) / 10.0;
    bins.push_back({std::to_string(k * 10) + "-" + std::to_string(k * 10 + 10) + "%", lo, hi, false});
  }
  bins.push_back({"center", 0.25, 0.25, true});
  return bins;
}

/// Free-form mask whose ratio falls in [lo, hi), by rejection.
inline BinaryMask sample_mask_in_bin(Rng& rng, std::int64_t side, const MaskBin& bin,
                                     std::int64_t max_tries = 200000) {
  if (bin.center) return center_mask(side, side, 0.5);
  const BrushParams brush = BrushParams::scaled_for(side);
  for (std::int64_t t = 0; t < max_tries; ++t) {
    BinaryMask m = sample_freeform(rng, side, side, brush);
    const double r = m.ratio();
    if (r >= bin.lo && r < bin.hi) return m;
  }
  throw NumericError("could not sample a mask in bin " + bin.name);
}

struct BinResult {
  MaskBin bin;
  std::int64_t count = 0;
  double mean_ratio = 0, fid = 0, u_ids = 0, p_ids = 0;
};

struct EvalReport {
  std::string extractor_hash;
  std::int64_t feature_dim = 0;
  std::vector<BinResult> bins;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["extractor_hash"] = extractor_hash;
    j["feature_dim"] = feature_dim;
    j["bins"] = nlohmann::json::array();
    for (const auto& b : bins)
      j["bins"].push_back({{"name", b.bin.name},
                           {"lo", b.bin.lo},
                           {"hi", b.bin.hi},
                           {"center", b.bin.center},
                           {"count", b.count},
                           {"mean_ratio", b.mean_ratio},
                           {"fid", b.fid},
                           {"u_ids", b.u_ids},
                           {"p_ids", b.p_ids}});
    return j;
  }
};

/// (ground truth with holes zeroed [N,3,H,W], masks [N,1,H,W], exemplars
/// [N,3,H,W], seed) -> composited output [N,3,H,W].
using InpaintFn = std::function<Tensor<float>(const Tensor<float>&, const Tensor<float>&,
                                              const Tensor<float>&, std::uint64_t)>;

/// Inpaints `n_samples` held-out images per bin (cycling through `reals`),
/// each with the exemplar at the reverse index of its batch, and compares
/// outputs with all of `reals`.
inline EvalReport evaluate(const InpaintFn& inpaint, const Dataset& reals, const std::vector<MaskBin>& bins,
                           std::int64_t n_samples, std::uint64_t seed, std::int64_t batch = 8,
                           const FeatureExtractor& extractor = FeatureExtractor()) {
  if (n_samples < 2) throw ParameterError("evaluation needs at least two samples per bin");
  if (reals.size() < 2) throw ParameterError("evaluation needs at least two real images");
  const std::int64_t res = reals.resolution(), hw = res * res;
  const FeatureSet real_feats = extractor.extract(reals.images);
  EvalReport report;
  report.extractor_hash = extractor.hash();
  report.feature_dim = extractor.dim();
  Rng rng(seed);
  for (const MaskBin& bin : bins) {
    Tensor<float> outputs({n_samples, 3, res, res});
    std::vector<std::int64_t> gt_index;
    double ratio_sum = 0;
    for (std::int64_t s = 0; s < n_samples; s += batch) {
      const std::int64_t k = std::min(batch, n_samples - s);
      std::vector<std::int64_t> idx, rev;
      for (std::int64_t i = 0; i < k; ++i) idx.push_back((s + i) % reals.size());
      for (std::int64_t i = 0; i < k; ++i) rev.push_back(idx[static_cast<std::size_t>(k - 1 - i)]);
      std::vector<BinaryMask> masks;
      for (std::int64_t i = 0; i < k; ++i) {
        masks.push_back(sample_mask_in_bin(rng, res, bin));
        ratio_sum += masks.back().ratio();
      }
      const Tensor<float> m = stack_masks<float>(masks);
      Tensor<float> input = reals.gather(idx);
      for (std::int64_t i = 0; i < input.numel(); ++i)
        if (m[(i / (3 * hw)) * hw + i % hw] != 0.0f) input[i] = 0.0f;
      const Tensor<float> out = inpaint(input, m, reals.gather(rev), rng.next_u64());
      std::copy_n(out.data(), out.numel(), outputs.data() + s * 3 * hw);
      gt_index.insert(gt_index.end(), idx.begin(), idx.end());
    }
    const FeatureSet fake_feats = extractor.extract(outputs);
    FeatureSet paired_real(n_samples, extractor.dim());
    for (std::int64_t i = 0; i < n_samples; ++i) paired_real.row(i) = real_feats.row(gt_index[static_cast<std::size_t>(i)]);
    BinResult r;
    r.bin = bin;
    r.count = n_samples;
    r.mean_ratio = ratio_sum / static_cast<double>(n_samples);
    r.fid = fid(real_feats, fake_feats);
    const IdsScores ids = ids_scores(paired_real, fake_feats);
    r.u_ids = ids.u_ids;
    r.p_ids = ids.p_ids;
    report.bins.push_back(r);
  }
  return report;
}

/// Inpainting with a model: exemplar codes from E, stochastic codes from
/// seeded latents, the configured selector, no truncation.
inline InpaintFn model_inpainter(const Networks& nets, const MixSelector& phi) {
  return [&nets, phi](const Tensor<float>& input, const Tensor<float>& mask, const Tensor<float>& exemplar,
                      std::uint64_t seed) {
    NoGrad no_grad;
    Rng rng(seed);
    const Tensor<float> z = sample_latents<float>(rng, input.dim(0), nets.cfg.style_dim);
    const Var<float> code = mix_styles(nets.E(Var<float>(exemplar)), nets.f(Var<float>(z)), phi);
    return nets.G.generate(Var<float>(input), mask, code, rng.next_u64()).value();
  };
}

}  // namespace facefill
