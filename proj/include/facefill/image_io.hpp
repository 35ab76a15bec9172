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

#include <png.h>

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "facefill/errors.hpp"
#include "facefill/masks.hpp"
#include "facefill/tensor.hpp"

namespace facefill {

/// Interleaved 8-bit image, channels 1 (gray) or 3 (RGB).
struct Image {
  std::int64_t h = 0, w = 0, c = 3;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(std::int64_t height, std::int64_t width, std::int64_t channels)
      : h(height), w(width), c(channels), data(static_cast<std::size_t>(height * width * channels)) {}

  std::uint8_t& at(std::int64_t y, std::int64_t x, std::int64_t ch) { return data[(y * w + x) * c + ch]; }
  std::uint8_t at(std::int64_t y, std::int64_t x, std::int64_t ch) const { return data[(y * w + x) * c + ch]; }
  bool operator==(const Image&) const = default;
};

// ---------------------------------------------------------------------------
// PNG

inline Image decode_png(const std::uint8_t* bytes, std::size_t size, int channels = 3) {
  if (channels != 1 && channels != 3) throw ParameterError("PNG channels must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes, size))
    throw IoError(std::string("PNG decode failed: ") + img.message);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image out(img.height, img.width, channels);
  if (!png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("PNG decode failed: " + msg);
  }
  return out;
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes, int channels = 3) {
  return decode_png(bytes.data(), bytes.size(), channels);
}

inline std::vector<std::uint8_t> encode_png(const Image& im) {
  if (im.c != 1 && im.c != 3) throw ParameterError("PNG channels must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(im.w);
  img.height = static_cast<png_uint_32>(im.h);
  img.format = im.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, im.data.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, im.data.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + img.message);
  out.resize(size);
  return out;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const void* data, std::size_t n) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to " + p.string());
}

inline Image read_png(const std::filesystem::path& p, int channels = 3) {
  try {
    return decode_png(read_file(p), channels);
  } catch (const IoError& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

inline void write_png(const std::filesystem::path& p, const Image& im) {
  const auto bytes = encode_png(im);
  write_file(p, bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// base64

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string text) {
  std::erase_if(text, [](char ch) { return ch == '\n' || ch == '\r' || ch == ' '; });
  if (text.size() % 4 != 0) throw ParameterError("base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParameterError("invalid base64 payload");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// ---------------------------------------------------------------------------
// Conversions. Pixel values map to [-1,1] by v / 127.5 - 1; the inverse
// clamps and rounds, so uint8 -> float -> uint8 is the identity.

inline std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, -1.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround((c + 1.0f) * 127.5f));
}

inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

/// RGB image -> [1,3,H,W] in [-1,1].
inline Tensor<float> image_to_tensor(const Image& im) {
  if (im.c != 3) throw ParameterError("expected an RGB image");
  Tensor<float> t({1, 3, im.h, im.w});
  for (std::int64_t ch = 0; ch < 3; ++ch)
    for (std::int64_t y = 0; y < im.h; ++y)
      for (std::int64_t x = 0; x < im.w; ++x) t[(ch * im.h + y) * im.w + x] = from_byte(im.at(y, x, ch));
  return t;
}

/// Sample `n` of a [N,3,H,W] tensor -> RGB image (clamped to [-1,1]).
inline Image tensor_to_image(const Tensor<float>& t, std::int64_t n = 0) {
  if (t.rank() != 4 || t.dim(1) != 3) throw ParameterError("expected [N,3,H,W], got " + to_string(t.shape()));
  const std::int64_t h = t.dim(2), w = t.dim(3);
  Image im(h, w, 3);
  for (std::int64_t ch = 0; ch < 3; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) im.at(y, x, ch) = to_byte(t[((n * 3 + ch) * h + y) * w + x]);
  return im;
}

/// Gray or RGB image -> binary mask (first channel >= 128 is a hole).
inline BinaryMask image_to_mask(const Image& im) {
  BinaryMask m(im.h, im.w);
  for (std::int64_t y = 0; y < im.h; ++y)
    for (std::int64_t x = 0; x < im.w; ++x) m.at(y, x) = im.at(y, x, 0) >= 128 ? 1 : 0;
  return m;
}

inline Image mask_to_image(const BinaryMask& m) {
  Image im(m.h, m.w, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i) im.data[i] = m.data[i] ? 255 : 0;
  return im;
}

/// Center-crops to a square and resamples to side x side by area averaging.
inline Image center_crop_resize(const Image& src, std::int64_t side) {
  if (side <= 0) throw ParameterError("target side must be positive");
  const std::int64_t s = std::min(src.h, src.w);
  if (s <= 0) throw ParameterError("empty image");
  const std::int64_t oy = (src.h - s) / 2, ox = (src.w - s) / 2;
  if (s == side) {
    Image out(side, side, src.c);
    for (std::int64_t y = 0; y < side; ++y)
      for (std::int64_t x = 0; x < side; ++x)
        for (std::int64_t ch = 0; ch < src.c; ++ch) out.at(y, x, ch) = src.at(oy + y, ox + x, ch);
    return out;
  }
  // Per output pixel, weights of the source pixels overlapping its footprint.
  const double scale = static_cast<double>(s) / static_cast<double>(side);
  struct Tap {
    std::int64_t idx;
    double weight;
  };
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(side));
  for (std::int64_t o = 0; o < side; ++o) {
    const double a = o * scale, b = (o + 1) * scale;
    for (auto i = static_cast<std::int64_t>(std::floor(a)); i < static_cast<std::int64_t>(std::ceil(b)); ++i) {
      const double wgt = std::min<double>(b, i + 1) - std::max<double>(a, i);
      if (wgt > 0) taps[o].push_back({std::min(i, s - 1), wgt / scale});
    }
  }
  Image out(side, side, src.c);
  for (std::int64_t y = 0; y < side; ++y)
    for (std::int64_t x = 0; x < side; ++x)
      for (std::int64_t ch = 0; ch < src.c; ++ch) {
        double acc = 0;
        for (const Tap& ty : taps[y])
          for (const Tap& tx : taps[x]) acc += ty.weight * tx.weight * src.at(oy + ty.idx, ox + tx.idx, ch);
        out.at(y, x, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
  return out;
}

// ---------------------------------------------------------------------------
// Float arrays: "FFAR", u32 rank, rank x i64 dims, float32 little-endian
// payload. Used for weight masks and style codes.

inline std::vector<std::uint8_t> encode_float_array(const Tensor<float>& t) {
  std::vector<std::uint8_t> out{'F', 'F', 'A', 'R'};
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  };
  const auto rank = static_cast<std::uint32_t>(t.rank());
  put(&rank, 4);
  for (auto d : t.shape()) put(&d, 8);
  put(t.data(), static_cast<std::size_t>(t.numel()) * 4);
  return out;
}

inline Tensor<float> decode_float_array(const std::vector<std::uint8_t>& bytes) {
  std::size_t off = 0;
  auto get = [&](void* p, std::size_t n) {
    if (off + n > bytes.size()) throw IoError("truncated float array");
    std::memcpy(p, bytes.data() + off, n);
    off += n;
  };
  char magic[4];
  get(magic, 4);
  if (std::memcmp(magic, "FFAR", 4) != 0) throw IoError("not a float array file");
  std::uint32_t rank = 0;
  get(&rank, 4);
  if (rank > 8) throw IoError("float array rank too large");
  Shape s(rank);
  for (auto& d : s) {
    get(&d, 8);
    if (d < 0) throw IoError("negative dimension in float array");
  }
  Tensor<float> t(s);
  get(t.data(), static_cast<std::size_t>(t.numel()) * 4);
  if (off != bytes.size()) throw IoError("trailing bytes in float array");
  return t;
}

inline void write_float_array(const std::filesystem::path& p, const Tensor<float>& t) {
  const auto b = encode_float_array(t);
  write_file(p, b.data(), b.size());
}

inline Tensor<float> read_float_array(const std::filesystem::path& p) {
  return decode_float_array(read_file(p));
}

}  // namespace facefill
