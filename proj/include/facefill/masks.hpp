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
#include <numbers>
#include <vector>

#include "facefill/errors.hpp"
#include "facefill/rng.hpp"
#include "facefill/tensor.hpp"

namespace facefill {

/// h x w hole indicator: 1 = unknown, 0 = known.
struct BinaryMask {
  std::int64_t h = 0, w = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(std::int64_t height, std::int64_t width)
      : h(height), w(width), data(static_cast<std::size_t>(height * width), 0) {}

  std::uint8_t& at(std::int64_t y, std::int64_t x) { return data[y * w + x]; }
  std::uint8_t at(std::int64_t y, std::int64_t x) const { return data[y * w + x]; }

  double ratio() const {
    if (data.empty()) return 0.0;
    std::int64_t n = 0;
    for (auto v : data) n += v;
    return static_cast<double>(n) / static_cast<double>(data.size());
  }
  bool empty_hole() const {
    return std::all_of(data.begin(), data.end(), [](auto v) { return v == 0; });
  }

  /// [1,1,h,w]
  template <typename T>
  Tensor<T> tensor() const {
    Tensor<T> t({1, 1, h, w});
    for (std::size_t i = 0; i < data.size(); ++i) t[i] = static_cast<T>(data[i]);
    return t;
  }

  static BinaryMask from_tensor_threshold(const Tensor<float>& t, float threshold = 0.5f) {
    if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 1)
      throw ParameterError("mask tensor must be [1,1,h,w]");
    BinaryMask m(t.dim(2), t.dim(3));
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = t[i] > threshold ? 1 : 0;
    return m;
  }

  BinaryMask operator|(const BinaryMask& o) const {
    if (o.h != h || o.w != w) throw ParameterError("mask size mismatch");
    BinaryMask m(h, w);
    for (std::size_t i = 0; i < data.size(); ++i) m.data[i] = data[i] | o.data[i];
    return m;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// h x w continuous gradient weights in [0, 1].
struct WeightMask {
  std::int64_t h = 0, w = 0;
  std::vector<double> data;

  WeightMask() = default;
  WeightMask(std::int64_t height, std::int64_t width, double fill = 0.0)
      : h(height), w(width), data(static_cast<std::size_t>(height * width), fill) {}

  double& at(std::int64_t y, std::int64_t x) { return data[y * w + x]; }
  double at(std::int64_t y, std::int64_t x) const { return data[y * w + x]; }

  /// [1,1,h,w]
  template <typename T>
  Tensor<T> tensor() const {
    Tensor<T> t({1, 1, h, w});
    for (std::size_t i = 0; i < data.size(); ++i) t[i] = static_cast<T>(data[i]);
    return t;
  }

  static WeightMask from_binary(const BinaryMask& m) {
    WeightMask out(m.h, m.w);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i];
    return out;
  }
};

/// Free-form brush parameters (lengths and widths in pixels, angle in
/// degrees).
struct BrushParams {
  std::int64_t max_vertex = 20;
  double max_length = 100;
  double max_brush_width = 24;
  double max_angle = 360;

  void validate() const {
    if (max_vertex <= 0 || max_length < 0 || max_brush_width <= 0 || max_angle <= 0 ||
        max_angle > 360)
      throw ParameterError("invalid brush parameters");
  }

  /// Defaults are stated for 256x256; lengths and widths scale with the side.
  static BrushParams scaled_for(std::int64_t side) {
    BrushParams p;
    const double s = static_cast<double>(side) / 256.0;
    p.max_length *= s;
    p.max_brush_width *= s;
    return p;
  }
};

struct Point2 {
  double x = 0, y = 0;
};

/// One polyline walk: vertices in pixel coordinates plus its brush width.
struct StrokeWalk {
  std::vector<Point2> vertices;
  double width = 1;
};

/// Pixel (x, y) covers [x, x+1) x [y, y+1); coverage is decided at its center.
inline void draw_thick_segment(BinaryMask& m, Point2 a, Point2 b, double radius) {
  const double x0 = std::min(a.x, b.x) - radius, x1 = std::max(a.x, b.x) + radius;
  const double y0 = std::min(a.y, b.y) - radius, y1 = std::max(a.y, b.y) + radius;
  const auto lo_x = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(x0)));
  const auto hi_x = std::min<std::int64_t>(m.w - 1, static_cast<std::int64_t>(std::ceil(x1)));
  const auto lo_y = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(y0)));
  const auto hi_y = std::min<std::int64_t>(m.h - 1, static_cast<std::int64_t>(std::ceil(y1)));
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  const double r2 = radius * radius;
  for (std::int64_t y = lo_y; y <= hi_y; ++y) {
    for (std::int64_t x = lo_x; x <= hi_x; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
      if (ex * ex + ey * ey <= r2) m.at(y, x) = 1;
    }
  }
}

inline BinaryMask render_strokes(const StrokeWalk& walk, std::int64_t h, std::int64_t w) {
  BinaryMask m(h, w);
  const double radius = walk.width / 2.0;
  if (walk.vertices.size() == 1) draw_thick_segment(m, walk.vertices[0], walk.vertices[0], radius);
  for (std::size_t i = 1; i < walk.vertices.size(); ++i)
    draw_thick_segment(m, walk.vertices[i - 1], walk.vertices[i], radius);
  return m;
}

namespace detail {
inline void check_mask_size(std::int64_t h, std::int64_t w) {
  if (h < 8 || w < 8) throw ParameterError("mask size must be at least 8x8");
}
}  // namespace detail

/// Random polyline walk: vertex count ~ U{1..max_vertex}, segment length
/// ~ U[0, max_length], turn ~ U[0, max_angle], width ~ U[1, max_brush_width].
inline StrokeWalk sample_stroke_walk(Rng& rng, std::int64_t h, std::int64_t w,
                                     const BrushParams& p) {
  detail::check_mask_size(h, w);
  p.validate();
  StrokeWalk walk;
  const auto n_vertex = rng.uniform_int(1, p.max_vertex);
  walk.width = rng.uniform(1.0, std::max(1.0, p.max_brush_width));
  Point2 cur{rng.uniform(0.0, static_cast<double>(w)), rng.uniform(0.0, static_cast<double>(h))};
  double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  walk.vertices.push_back(cur);
  for (std::int64_t i = 1; i < n_vertex; ++i) {
    heading += rng.uniform(0.0, p.max_angle) * std::numbers::pi / 180.0;
    const double len = rng.uniform(0.0, p.max_length);
    cur.x = std::clamp(cur.x + len * std::cos(heading), 0.0, static_cast<double>(w));
    cur.y = std::clamp(cur.y + len * std::sin(heading), 0.0, static_cast<double>(h));
    walk.vertices.push_back(cur);
  }
  return walk;
}

inline BinaryMask sample_brush_strokes(Rng& rng, std::int64_t h, std::int64_t w,
                                       const BrushParams& p) {
  return render_strokes(sample_stroke_walk(rng, h, w, p), h, w);
}

struct Rect {
  std::int64_t y = 0, x = 0, h = 0, w = 0;
};

struct RectangleLayout {
  std::int64_t n_half = 0, n_quarter = 0;
  std::vector<Rect> rects;  // the n_half large ones first
};

/// n_half ~ U{0..5} rectangles with sides up to h/2 x w/2 and n_quarter
/// ~ U{0..10} with sides up to h/4 x w/4; sides uniform up to the cap, top-left
/// corner uniform over positions that keep the rectangle inside the image.
inline RectangleLayout sample_rectangle_layout(Rng& rng, std::int64_t h, std::int64_t w) {
  detail::check_mask_size(h, w);
  RectangleLayout layout;
  layout.n_half = rng.uniform_int(0, 5);
  layout.n_quarter = rng.uniform_int(0, 10);
  auto draw = [&](std::int64_t cap_h, std::int64_t cap_w) {
    Rect r;
    r.h = rng.uniform_int(1, cap_h);
    r.w = rng.uniform_int(1, cap_w);
    r.y = rng.uniform_int(0, h - r.h);
    r.x = rng.uniform_int(0, w - r.w);
    layout.rects.push_back(r);
  };
  for (std::int64_t i = 0; i < layout.n_half; ++i) draw(h / 2, w / 2);
  for (std::int64_t i = 0; i < layout.n_quarter; ++i) draw(h / 4, w / 4);
  return layout;
}

inline BinaryMask render_rectangles(const RectangleLayout& layout, std::int64_t h,
                                    std::int64_t w) {
  BinaryMask m(h, w);
  for (const auto& r : layout.rects) {
    if (r.y < 0 || r.x < 0 || r.y + r.h > h || r.x + r.w > w)
      throw ParameterError("rectangle outside the image");
    for (std::int64_t y = r.y; y < r.y + r.h; ++y)
      for (std::int64_t x = r.x; x < r.x + r.w; ++x) m.at(y, x) = 1;
  }
  return m;
}

inline BinaryMask sample_rectangles(Rng& rng, std::int64_t h, std::int64_t w) {
  return render_rectangles(sample_rectangle_layout(rng, h, w), h, w);
}

/// Union of one brush walk and a rectangle layout, drawn in that order.
inline BinaryMask sample_freeform(Rng& rng, std::int64_t h, std::int64_t w,
                                  const BrushParams& p) {
  const BinaryMask strokes = sample_brush_strokes(rng, h, w, p);
  const BinaryMask rects = sample_rectangles(rng, h, w);
  return strokes | rects;
}

/// Centered rectangle of round(frac*h) x round(frac*w).
inline BinaryMask center_mask(std::int64_t h, std::int64_t w, double frac) {
  if (!(frac > 0.0 && frac <= 1.0)) throw ParameterError("center mask fraction must be in (0,1]");
  if (h <= 0 || w <= 0) throw ParameterError("mask size must be positive");
  const auto sh = static_cast<std::int64_t>(std::llround(frac * static_cast<double>(h)));
  const auto sw = static_cast<std::int64_t>(std::llround(frac * static_cast<double>(w)));
  BinaryMask m(h, w);
  const std::int64_t y0 = (h - sh) / 2, x0 = (w - sw) / 2;
  for (std::int64_t y = y0; y < y0 + sh; ++y)
    for (std::int64_t x = x0; x < x0 + sw; ++x) m.at(y, x) = 1;
  return m;
}

/// Odd kernel size closest to side/8 from above on ties.
inline std::int64_t default_blur_kernel(std::int64_t side) {
  const std::int64_t base = std::max<std::int64_t>(1, side / 8);
  return 2 * (base / 2) + 1;
}

namespace detail {
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}
}  // namespace detail

/// Gaussian-smoothed hole restricted to the hole: (G * M) . M, with reflect
/// padding. Numerator and normalizer accumulate in the same order, so a window
/// lying entirely inside the hole gives exactly 1.
inline WeightMask confidence_weight(const BinaryMask& m, std::int64_t kernel, double sigma) {
  if (kernel <= 0 || kernel % 2 == 0) throw ParameterError("blur kernel must be odd and positive");
  if (!(sigma > 0)) throw ParameterError("blur sigma must be positive");
  const std::int64_t r = kernel / 2;
  std::vector<double> k2(static_cast<std::size_t>(kernel * kernel));
  for (std::int64_t a = 0; a < kernel; ++a)
    for (std::int64_t b = 0; b < kernel; ++b) {
      const double dy = static_cast<double>(a - r), dx = static_cast<double>(b - r);
      k2[a * kernel + b] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
    }
  double norm = 0;
  for (double v : k2) norm += v;
  WeightMask out(m.h, m.w);
  for (std::int64_t y = 0; y < m.h; ++y) {
    for (std::int64_t x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      double acc = 0;
      for (std::int64_t a = 0; a < kernel; ++a) {
        const std::int64_t yy = detail::reflect_index(y + a - r, m.h);
        for (std::int64_t b = 0; b < kernel; ++b) {
          const std::int64_t xx = detail::reflect_index(x + b - r, m.w);
          acc += k2[a * kernel + b] * static_cast<double>(m.at(yy, xx));
        }
      }
      out.at(y, x) = std::min(1.0, acc / norm);
    }
  }
  return out;
}

inline WeightMask confidence_weight(const BinaryMask& m) {
  const std::int64_t k = default_blur_kernel(std::min(m.h, m.w));
  return confidence_weight(m, k, static_cast<double>(k) / 3.0);
}

/// (1 - M_w) . M
inline WeightMask reverse_weight(const WeightMask& mw, const BinaryMask& m) {
  if (mw.h != m.h || mw.w != m.w) throw ParameterError("weight mask and mask sizes differ");
  WeightMask out(m.h, m.w);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    out.data[i] = (1.0 - mw.data[i]) * static_cast<double>(m.data[i]);
  return out;
}

}  // namespace facefill
