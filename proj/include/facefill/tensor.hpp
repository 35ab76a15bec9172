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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "facefill/errors.hpp"

namespace facefill {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Row-major strides; broadcast dimensions are not special-cased here.
inline Shape strides_of(const Shape& s) {
  Shape st(s.size(), 1);
  for (std::int64_t i = static_cast<std::int64_t>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

/// Numpy-style broadcast of two shapes; throws on incompatibility.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da =
        i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db =
        i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ParameterError("cannot broadcast " + to_string(a) + " with " +
                           to_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

/// Dense row-major tensor with value semantics.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(numel_of(shape_), fill) {
    for (auto d : shape_)
      if (d < 0) throw ParameterError("negative dimension in " + to_string(shape_));
  }
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != numel_of(shape_))
      throw ParameterError("data size does not match shape " +
                           to_string(shape_));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s), T(0)); }
  static Tensor ones(Shape s) { return Tensor(std::move(s), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  /// NCHW accessor for rank-4 tensors.
  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(
        ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t h,
              std::int64_t w) const {
    return data_[static_cast<std::size_t>(
        ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  T item() const {
    if (data_.size() != 1)
      throw ParameterError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape s) const {
    if (numel_of(s) != numel())
      throw ParameterError("cannot reshape " + to_string(shape_) + " to " +
                           to_string(s));
    return Tensor(std::move(s), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

namespace detail {

/// Walks every index of `out_shape`, reporting the linear offsets of up to
/// two broadcast operands. The innermost dimension runs as a tight loop.
template <typename F>
void broadcast_walk(const Shape& out_shape, const Shape& a_shape,
                    const Shape& b_shape, F&& f) {
  const std::size_t rank = out_shape.size();
  if (rank == 0) {
    f(0, 0, 0, 1, 0, 0);
    return;
  }
  auto aligned_strides = [&](const Shape& s) {
    Shape st(rank, 0);
    const Shape own = strides_of(s);
    const std::size_t off = rank - s.size();
    for (std::size_t i = 0; i < s.size(); ++i)
      st[off + i] = s[i] == 1 ? 0 : own[i];
    return st;
  };
  const Shape sa = aligned_strides(a_shape);
  const Shape sb = aligned_strides(b_shape);
  const std::int64_t inner = out_shape[rank - 1];
  const std::int64_t outer = numel_of(out_shape) / std::max<std::int64_t>(inner, 1);
  if (inner == 0) return;
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t oa = 0, ob = 0, oo = 0;
  for (std::int64_t o = 0; o < outer; ++o) {
    f(oo, oa, ob, inner, sa[rank - 1], sb[rank - 1]);
    oo += inner;
    for (std::int64_t d = static_cast<std::int64_t>(rank) - 2; d >= 0; --d) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out_shape[d]) break;
      oa -= sa[d] * out_shape[d];
      ob -= sb[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

/// Elementwise binary op with broadcasting.
template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0, n = a.numel(); i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  Tensor<T> out(broadcast_shape(a.shape(), b.shape()));
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  detail::broadcast_walk(
      out.shape(), a.shape(), b.shape(),
      [&](std::int64_t oo, std::int64_t oa, std::int64_t ob, std::int64_t n,
          std::int64_t sa, std::int64_t sb) {
        for (std::int64_t i = 0; i < n; ++i)
          po[oo + i] = f(pa[oa + i * sa], pb[ob + i * sb]);
      });
  return out;
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F&& f) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t i = 0, n = a.numel(); i < n; ++i) po[i] = f(pa[i]);
  return out;
}

/// Sums `a` down to `target` (a shape `a` broadcasts from).
template <typename T>
Tensor<T> sum_to(const Tensor<T>& a, const Shape& target) {
  if (a.shape() == target) return a;
  if (broadcast_shape(target, a.shape()) != a.shape())
    throw ParameterError("cannot reduce " + to_string(a.shape()) + " to " +
                         to_string(target));
  Tensor<T> out(target);
  const T* pa = a.data();
  T* po = out.data();
  detail::broadcast_walk(
      a.shape(), a.shape(), target,
      [&](std::int64_t, std::int64_t oa, std::int64_t ob, std::int64_t n,
          std::int64_t sa, std::int64_t sb) {
        if (sb == 0) {
          T acc = po[ob];
          for (std::int64_t i = 0; i < n; ++i) acc += pa[oa + i * sa];
          po[ob] = acc;
        } else {
          for (std::int64_t i = 0; i < n; ++i) po[ob + i * sb] += pa[oa + i * sa];
        }
      });
  return out;
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& target) {
  if (a.shape() == target) return a;
  if (broadcast_shape(a.shape(), target) != target)
    throw ParameterError("cannot broadcast " + to_string(a.shape()) + " to " +
                         to_string(target));
  Tensor<T> zero(target);
  return zip(zero, a, [](T, T y) { return y; });
}

template <typename T>
T max_abs(const Tensor<T>& a) {
  T m = 0;
  for (T v : a.vec()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace facefill
