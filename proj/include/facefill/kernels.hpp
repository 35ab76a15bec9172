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

#include <Eigen/Core>

#include "facefill/tensor.hpp"

// Dense convolution and pooling kernels on raw NCHW buffers. Stride is
// always 1; resolution changes go through the pooling kernels.
namespace facefill::kernels {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeom {
  std::int64_t n, ci, h, w, co, k, pad, ho, wo;
  bool per_sample;
};

inline ConvGeom conv_geometry(const Shape& x, const Shape& w, std::int64_t pad) {
  if (x.size() != 4) throw ParameterError("conv2d input must be NCHW, got " + to_string(x));
  const bool per_sample = w.size() == 5;
  if (w.size() != 4 && !per_sample)
    throw ParameterError("conv2d weight must be rank 4 or 5, got " + to_string(w));
  const std::size_t o = per_sample ? 1 : 0;
  ConvGeom g{x[0], x[1], x[2], x[3], w[o], w[o + 2], pad, 0, 0, per_sample};
  if (per_sample && w[0] != x[0])
    throw ParameterError("per-sample conv weight batch " + std::to_string(w[0]) +
                         " != input batch " + std::to_string(x[0]));
  if (w[o + 1] != g.ci)
    throw ParameterError("conv2d channel mismatch: input has " + std::to_string(g.ci) +
                         ", weight expects " + std::to_string(w[o + 1]));
  if (w[o + 3] != g.k) throw ParameterError("conv2d kernel must be square");
  g.ho = g.h + 2 * pad - g.k + 1;
  g.wo = g.w + 2 * pad - g.k + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ParameterError("conv2d output would be empty");
  return g;
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const std::int64_t hw = g.ho * g.wo;
  for (std::int64_t c = 0; c < g.ci; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::int64_t a = 0; a < g.k; ++a) {
      for (std::int64_t b = 0; b < g.k; ++b) {
        T* row = cols + ((c * g.k + a) * g.k + b) * hw;
        for (std::int64_t i = 0; i < g.ho; ++i) {
          const std::int64_t y = i + a - g.pad;
          T* dst = row + i * g.wo;
          if (y < 0 || y >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = xc + y * g.w;
          for (std::int64_t j = 0; j < g.wo; ++j) {
            const std::int64_t xx = j + b - g.pad;
            dst[j] = (xx < 0 || xx >= g.w) ? T(0) : src[xx];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::int64_t pad) {
  const ConvGeom g = conv_geometry(x.shape(), w.shape(), pad);
  Tensor<T> y({g.n, g.co, g.ho, g.wo});
  const std::int64_t kk = g.ci * g.k * g.k;
  const std::int64_t hw = g.ho * g.wo;
  const bool direct = g.k == 1 && g.pad == 0;
  std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kk * hw));
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* xn = x.data() + n * g.ci * g.h * g.w;
    if (!direct) im2col(xn, g, cols.data());
    CMapMat<T> wm(w.data() + (g.per_sample ? n * g.co * kk : 0), g.co, kk);
    CMapMat<T> cm(direct ? xn : cols.data(), kk, hw);
    MapMat<T> ym(y.data() + n * g.co * hw, g.co, hw);
    ym.noalias() = wm * cm;
  }
  return y;
}

/// Gradient of conv2d with respect to its weight, given the input and the
/// output gradient.
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy,
                             std::int64_t k, std::int64_t pad, bool per_sample) {
  const Shape ws = per_sample ? Shape{x.dim(0), gy.dim(1), x.dim(1), k, k}
                              : Shape{gy.dim(1), x.dim(1), k, k};
  const ConvGeom g = conv_geometry(x.shape(), ws, pad);
  if (gy.dim(0) != g.n || gy.dim(2) != g.ho || gy.dim(3) != g.wo)
    throw ParameterError("conv2d_weight_grad: gradient shape " + to_string(gy.shape()) +
                         " inconsistent with input " + to_string(x.shape()));
  Tensor<T> gw(ws);
  const std::int64_t kk = g.ci * g.k * g.k;
  const std::int64_t hw = g.ho * g.wo;
  const bool direct = g.k == 1 && g.pad == 0;
  std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kk * hw));
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* xn = x.data() + n * g.ci * g.h * g.w;
    if (!direct) im2col(xn, g, cols.data());
    CMapMat<T> cm(direct ? xn : cols.data(), kk, hw);
    CMapMat<T> gm(gy.data() + n * g.co * hw, g.co, hw);
    MapMat<T> wm(gw.data() + (per_sample ? n * g.co * kk : 0), g.co, kk);
    if (per_sample)
      wm.noalias() = gm * cm.transpose();
    else
      wm.noalias() += gm * cm.transpose();
  }
  return gw;
}

/// [Co,Ci,k,k] -> [Ci,Co,k,k] with both spatial axes reversed (rank-5
/// per-sample weights keep their leading batch axis).
template <typename T>
Tensor<T> flip_transpose(const Tensor<T>& w) {
  const bool per_sample = w.rank() == 5;
  const std::size_t o = per_sample ? 1 : 0;
  const std::int64_t nb = per_sample ? w.dim(0) : 1;
  const std::int64_t co = w.dim(o), ci = w.dim(o + 1), k = w.dim(o + 2);
  Shape out_shape = per_sample ? Shape{nb, ci, co, k, k} : Shape{ci, co, k, k};
  Tensor<T> out(out_shape);
  const std::int64_t kk = k * k;
  for (std::int64_t n = 0; n < nb; ++n) {
    const T* src = w.data() + n * co * ci * kk;
    T* dst = out.data() + n * co * ci * kk;
    for (std::int64_t o2 = 0; o2 < co; ++o2)
      for (std::int64_t i = 0; i < ci; ++i)
        for (std::int64_t t = 0; t < kk; ++t)
          dst[(i * co + o2) * kk + (kk - 1 - t)] = src[(o2 * ci + i) * kk + t];
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) % 2 || x.dim(3) % 2)
    throw ParameterError("avg_pool2 needs NCHW with even spatial size, got " +
                         to_string(x.shape()));
  const std::int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({x.dim(0), x.dim(1), h / 2, w / 2});
  for (std::int64_t p = 0; p < nc; ++p) {
    const T* s = x.data() + p * h * w;
    T* d = y.data() + p * (h / 2) * (w / 2);
    for (std::int64_t i = 0; i < h / 2; ++i)
      for (std::int64_t j = 0; j < w / 2; ++j)
        d[i * (w / 2) + j] = T(0.25) * (s[2 * i * w + 2 * j] + s[2 * i * w + 2 * j + 1] +
                                        s[(2 * i + 1) * w + 2 * j] +
                                        s[(2 * i + 1) * w + 2 * j + 1]);
  }
  return y;
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  if (x.rank() != 4) throw ParameterError("upsample2 needs NCHW, got " + to_string(x.shape()));
  const std::int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (std::int64_t p = 0; p < nc; ++p) {
    const T* s = x.data() + p * h * w;
    T* d = y.data() + p * 4 * h * w;
    for (std::int64_t i = 0; i < 2 * h; ++i)
      for (std::int64_t j = 0; j < 2 * w; ++j) d[i * 2 * w + j] = s[(i / 2) * w + j / 2];
  }
  return y;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  if (a.rank() != 2 || b.rank() != 2) throw ParameterError("matmul needs rank-2 operands");
  CMapMat<T> am(a.data(), a.dim(0), a.dim(1));
  CMapMat<T> bm(b.data(), b.dim(0), b.dim(1));
  const std::int64_t m = ta ? a.dim(1) : a.dim(0);
  const std::int64_t ka = ta ? a.dim(0) : a.dim(1);
  const std::int64_t kb = tb ? b.dim(1) : b.dim(0);
  const std::int64_t n = tb ? b.dim(0) : b.dim(1);
  if (ka != kb)
    throw ParameterError("matmul inner dimension mismatch: " + to_string(a.shape()) +
                         (ta ? "^T" : "") + " x " + to_string(b.shape()) + (tb ? "^T" : ""));
  Tensor<T> c({m, n});
  MapMat<T> cm(c.data(), m, n);
  if (!ta && !tb) cm.noalias() = am * bm;
  else if (ta && !tb) cm.noalias() = am.transpose() * bm;
  else if (!ta && tb) cm.noalias() = am * bm.transpose();
  else cm.noalias() = am.transpose() * bm.transpose();
  return c;
}

}  // namespace facefill::kernels
