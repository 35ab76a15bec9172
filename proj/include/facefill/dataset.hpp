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
#include <array>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "facefill/image_io.hpp"
#include "facefill/rng.hpp"

namespace facefill {

/// Images in [-1,1] as [N,3,R,R] plus an integer identity label per image
/// (-1 when unknown).
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;

  std::int64_t size() const { return images.rank() == 4 ? images.dim(0) : 0; }
  std::int64_t resolution() const { return images.dim(2); }
  std::int64_t image_numel() const { return 3 * images.dim(2) * images.dim(3); }

  /// Copies the listed samples into a new [k,3,R,R] tensor.
  Tensor<float> gather(const std::vector<std::int64_t>& idx) const {
    const std::int64_t per = image_numel();
    Shape s = images.shape();
    s[0] = static_cast<std::int64_t>(idx.size());
    Tensor<float> out(s);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= size()) throw ParameterError("dataset index out of range");
      std::copy_n(images.data() + idx[i] * per, per, out.data() + static_cast<std::int64_t>(i) * per);
    }
    return out;
  }

  Dataset subset(const std::vector<std::int64_t>& idx) const {
    Dataset d;
    d.images = gather(idx);
    for (auto i : idx) d.labels.push_back(labels[static_cast<std::size_t>(i)]);
    return d;
  }

  /// First `n_first` samples and the remainder.
  std::pair<Dataset, Dataset> split(std::int64_t n_first) const {
    if (n_first < 0 || n_first > size()) throw ParameterError("split point out of range");
    std::vector<std::int64_t> a, b;
    for (std::int64_t i = 0; i < size(); ++i) (i < n_first ? a : b).push_back(i);
    return {subset(a), subset(b)};
  }
};

/// Loads every *.png under `dir` (sorted by file name), center-cropped and
/// resized to `resolution`. Labels come from `labels.csv` (file,label) when
/// present.
inline Dataset load_image_dir(const std::filesystem::path& dir, std::int64_t resolution) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no PNG images in " + dir.string());

  std::map<std::string, int> label_of;
  if (std::ifstream csv(dir / "labels.csv"); csv) {
    std::string line;
    while (std::getline(csv, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos || line.rfind("file,", 0) == 0) continue;
      label_of[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
    }
  }

  Dataset d;
  d.images = Tensor<float>({static_cast<std::int64_t>(files.size()), 3, resolution, resolution});
  const std::int64_t per = 3 * resolution * resolution;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Image im = center_crop_resize(read_png(files[i], 3), resolution);
    const Tensor<float> t = image_to_tensor(im);
    std::copy_n(t.data(), per, d.images.data() + static_cast<std::int64_t>(i) * per);
    const auto it = label_of.find(files[i].filename().string());
    d.labels.push_back(it == label_of.end() ? -1 : it->second);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Procedural toy faces. Each identity fixes face geometry and colors; each
// image of an identity varies pose, expression, lighting and accessories.

struct ToyIdentity {
  double face_w, face_h, eye_dx, eye_y, eye_r, mouth_y, mouth_w, nose_len, hairline, brow_tilt;
  double skin[3], hair[3], iris[3], background[3];
};

struct ToyVariation {
  double dx, dy, scale, smile, light, gaze;
  bool glasses;
};

inline ToyIdentity sample_toy_identity(Rng& rng) {
  ToyIdentity id{};
  id.face_w = rng.uniform(0.30, 0.40);
  id.face_h = rng.uniform(0.38, 0.46);
  id.eye_dx = rng.uniform(0.12, 0.18);
  id.eye_y = rng.uniform(-0.10, -0.03);
  id.eye_r = rng.uniform(0.035, 0.06);
  id.mouth_y = rng.uniform(0.18, 0.26);
  id.mouth_w = rng.uniform(0.08, 0.16);
  id.nose_len = rng.uniform(0.06, 0.14);
  id.hairline = rng.uniform(-0.32, -0.18);
  id.brow_tilt = rng.uniform(-0.3, 0.3);
  const double tone = rng.uniform(0.35, 0.95);
  id.skin[0] = tone;
  id.skin[1] = tone * rng.uniform(0.72, 0.85);
  id.skin[2] = tone * rng.uniform(0.55, 0.72);
  for (double& c : id.hair) c = rng.uniform(0.05, 0.75);
  for (double& c : id.iris) c = rng.uniform(0.05, 0.6);
  for (double& c : id.background) c = rng.uniform(0.2, 0.9);
  return id;
}

inline ToyVariation sample_toy_variation(Rng& rng) {
  ToyVariation v{};
  v.dx = rng.uniform(-0.05, 0.05);
  v.dy = rng.uniform(-0.04, 0.04);
  v.scale = rng.uniform(0.92, 1.08);
  v.smile = rng.uniform(-1.0, 1.0);
  v.light = rng.uniform(0.85, 1.15);
  v.gaze = rng.uniform(-1.0, 1.0);
  v.glasses = rng.bernoulli(0.25);
  return v;
}

/// Renders one face at side x side with 4x4 supersampling. Returns values in
/// [0,1] as an RGB image.
inline Image render_toy_face(const ToyIdentity& id, const ToyVariation& v, std::int64_t side) {
  auto color_at = [&](double px, double py, std::array<double, 3>& out) {
    // Normalized coordinates centered on the face.
    const double x = (px - 0.5 - v.dx) / v.scale, y = (py - 0.5 - v.dy) / v.scale;
    for (int c = 0; c < 3; ++c) out[c] = id.background[c] * (0.8 + 0.2 * py);
    const double fx = x / id.face_w, fy = y / id.face_h;
    const double face = fx * fx + fy * fy;
    // Hair behind and on top of the head.
    const double hx = x / (id.face_w * 1.12), hy = (y + 0.03) / (id.face_h * 1.1);
    if (hx * hx + hy * hy < 1.0 && y < 0.1)
      for (int c = 0; c < 3; ++c) out[c] = id.hair[c];
    if (face >= 1.0) return;
    for (int c = 0; c < 3; ++c) out[c] = id.skin[c] * v.light * (1.0 - 0.15 * face);
    if (y < id.hairline + 0.04 * std::cos(6 * x)) {
      for (int c = 0; c < 3; ++c) out[c] = id.hair[c];
      return;
    }
    for (int side_sign : {-1, 1}) {
      const double ex = x - side_sign * id.eye_dx, ey = y - id.eye_y;
      // Brow.
      const double by = ey + 2.2 * id.eye_r + side_sign * id.brow_tilt * ex;
      if (std::abs(by) < 0.012 && std::abs(ex) < 1.6 * id.eye_r)
        for (int c = 0; c < 3; ++c) out[c] = id.hair[c] * 0.8;
      const double e = (ex * ex) / (1.6 * id.eye_r * 1.6 * id.eye_r) + (ey * ey) / (id.eye_r * id.eye_r);
      if (e < 1.0) {
        for (double& c : out) c = 0.95;
        const double ix = ex - 0.5 * id.eye_r * v.gaze;
        if (ix * ix + ey * ey < 0.45 * id.eye_r * id.eye_r)
          for (int c = 0; c < 3; ++c) out[c] = id.iris[c];
        if (ix * ix + ey * ey < 0.12 * id.eye_r * id.eye_r)
          for (double& c : out) c = 0.05;
      }
      if (v.glasses) {
        const double r = std::sqrt(ex * ex + ey * ey);
        if (std::abs(r - 2.0 * id.eye_r) < 0.01) for (double& c : out) c = 0.1;
      }
    }
    if (v.glasses && std::abs(y - id.eye_y) < 0.008 && std::abs(x) < id.eye_dx - 2.0 * id.eye_r)
      for (double& c : out) c = 0.1;
    // Nose.
    if (std::abs(x) < 0.012 && y > id.eye_y + 0.02 && y < id.eye_y + 0.02 + id.nose_len)
      for (int c = 0; c < 3; ++c) out[c] *= 0.8;
    // Mouth: a parabola whose curvature follows the smile.
    const double mx = x / id.mouth_w;
    if (std::abs(mx) < 1.0) {
      const double curve = id.mouth_y - 0.04 * v.smile * (1.0 - mx * mx);
      if (std::abs(y - curve) < 0.015) {
        out[0] = 0.6 * v.light;
        out[1] = 0.15;
        out[2] = 0.2;
      }
    }
  };

  Image im(side, side, 3);
  constexpr int kSub = 4;
  for (std::int64_t yy = 0; yy < side; ++yy)
    for (std::int64_t xx = 0; xx < side; ++xx) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          std::array<double, 3> c{};
          color_at((xx + (sx + 0.5) / kSub) / side, (yy + (sy + 0.5) / kSub) / side, c);
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      for (int k = 0; k < 3; ++k)
        im.at(yy, xx, k) = static_cast<std::uint8_t>(
            std::clamp(std::lround(255.0 * acc[k] / (kSub * kSub)), 0L, 255L));
    }
  return im;
}

/// `identities` x `per_identity` faces, ordered by identity; deterministic in
/// `seed`.
inline Dataset make_toy_faces(std::int64_t identities, std::int64_t per_identity,
                              std::int64_t resolution, std::uint64_t seed) {
  if (identities <= 0 || per_identity <= 0) throw ParameterError("toy set needs positive counts");
  Rng rng(seed);
  Dataset d;
  d.images = Tensor<float>({identities * per_identity, 3, resolution, resolution});
  const std::int64_t per = 3 * resolution * resolution;
  std::int64_t k = 0;
  for (std::int64_t i = 0; i < identities; ++i) {
    const ToyIdentity id = sample_toy_identity(rng);
    for (std::int64_t j = 0; j < per_identity; ++j, ++k) {
      const Tensor<float> t = image_to_tensor(render_toy_face(id, sample_toy_variation(rng), resolution));
      std::copy_n(t.data(), per, d.images.data() + k * per);
      d.labels.push_back(static_cast<int>(i));
    }
  }
  return d;
}

/// Writes a dataset as PNG files plus labels.csv.
inline void write_image_dir(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "labels.csv");
  if (!csv) throw IoError("cannot write labels.csv in " + dir.string());
  csv << "file,label\n";
  for (std::int64_t i = 0; i < d.size(); ++i) {
    std::ostringstream name;
    name << "face_" << std::setw(5) << std::setfill('0') << i << ".png";
    write_png(dir / name.str(), tensor_to_image(d.gather({i})));
    csv << name.str() << ',' << d.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

}  // namespace facefill
