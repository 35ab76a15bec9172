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

#include <filesystem>
#include <random>

#include "facefill/dataset.hpp"
#include "facefill/image_io.hpp"

namespace facefill {
namespace {

Image random_image(std::int64_t h, std::int64_t w, int c, unsigned seed) {
  std::mt19937 gen(seed);
  Image im(h, w, c);
  for (auto& b : im.data) b = static_cast<std::uint8_t>(gen() & 0xFF);
  return im;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("facefill_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

TEST(ImageIo, PngRoundTripIsLossless) {
  for (int c : {1, 3}) {
    const Image im = random_image(17, 23, c, 5u + c);
    const Image back = decode_png(encode_png(im), c);
    EXPECT_EQ(back.h, 17);
    EXPECT_EQ(back.w, 23);
    EXPECT_EQ(back.data, im.data);
  }
}

TEST(ImageIo, CorruptPngThrowsIoError) {
  std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_THROW(decode_png(junk), IoError);
}

TEST(ImageIo, ByteFloatByteIsIdentityForAllValues) {
  for (int b = 0; b < 256; ++b) {
    const float f = from_byte(static_cast<std::uint8_t>(b));
    EXPECT_GE(f, -1.0f);
    EXPECT_LE(f, 1.0f);
    EXPECT_EQ(to_byte(f), b);
  }
}

TEST(ImageIo, OutOfRangeValuesClampOnSerialization) {
  EXPECT_EQ(to_byte(-7.0f), 0);
  EXPECT_EQ(to_byte(3.5f), 255);
  EXPECT_EQ(to_byte(-1.0f), 0);
  EXPECT_EQ(to_byte(1.0f), 255);
  Tensor<float> t({1, 3, 2, 2}, 9.0f);
  for (auto b : tensor_to_image(t).data) EXPECT_EQ(b, 255);
}

TEST(ImageIo, TensorImageRoundTrip) {
  const Image im = random_image(8, 8, 3, 11);
  const Tensor<float> t = image_to_tensor(im);
  ASSERT_EQ(t.shape(), (Shape{1, 3, 8, 8}));
  EXPECT_EQ(tensor_to_image(t).data, im.data);
  // Channel-planar layout: pixel (y=2,x=5) green lands at [0,1,2,5].
  EXPECT_FLOAT_EQ(t[(1 * 8 + 2) * 8 + 5], from_byte(im.at(2, 5, 1)));
}

TEST(ImageIo, MaskThresholdAt128) {
  Image im(1, 4, 1);
  im.data = {0, 127, 128, 255};
  const BinaryMask m = image_to_mask(im);
  EXPECT_EQ(m.data, (std::vector<std::uint8_t>{0, 0, 1, 1}));
  EXPECT_EQ(image_to_mask(mask_to_image(m)).data, m.data);
}

TEST(ImageIo, Base64KnownVectorsAndRoundTrip) {
  auto bytes = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  EXPECT_EQ(base64_encode(bytes("")), "");
  EXPECT_EQ(base64_encode(bytes("f")), "Zg==");
  EXPECT_EQ(base64_encode(bytes("fo")), "Zm8=");
  EXPECT_EQ(base64_encode(bytes("foobar")), "Zm9vYmFy");
  EXPECT_EQ(base64_decode("Zm8="), bytes("fo"));
  EXPECT_EQ(base64_decode("Zg=="), bytes("f"));
  const Image im = random_image(5, 7, 3, 3);
  const auto png = encode_png(im);
  EXPECT_EQ(base64_decode(base64_encode(png)), png);
  EXPECT_THROW(base64_decode("@@@"), ParameterError);
  EXPECT_THROW(base64_decode("@@@@"), ParameterError);
}

TEST(ImageIo, CenterCropResizeAveragesAreas) {
  Image im(4, 6, 1);
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t x = 0; x < 6; ++x) im.at(y, x, 0) = static_cast<std::uint8_t>(x < 3 ? 40 : 200);
  // Crop keeps columns 1..4: left half 40, right half 200.
  const Image out = center_crop_resize(im, 2);
  EXPECT_EQ(out.at(0, 0, 0), 40);
  EXPECT_EQ(out.at(1, 1, 0), 200);
  const Image same = center_crop_resize(random_image(9, 9, 3, 1), 9);
  EXPECT_EQ(same.h, 9);
}

TEST(ImageIo, FloatArrayRoundTrip) {
  Tensor<float> t({2, 3, 4});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.25f * static_cast<float>(i) - 1.0f;
  const Tensor<float> back = decode_float_array(encode_float_array(t));
  EXPECT_EQ(back.shape(), t.shape());
  for (std::int64_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back[i], t[i]);
  auto bad = encode_float_array(t);
  bad[0] = 'X';
  EXPECT_THROW(decode_float_array(bad), IoError);
  bad = encode_float_array(t);
  bad.pop_back();
  EXPECT_THROW(decode_float_array(bad), IoError);
}

TEST(Dataset, ToyFacesAreDeterministicAndLabelled) {
  const Dataset a = make_toy_faces(3, 2, 16, 42);
  const Dataset b = make_toy_faces(3, 2, 16, 42);
  ASSERT_EQ(a.size(), 6);
  EXPECT_EQ(a.labels, (std::vector<int>{0, 0, 1, 1, 2, 2}));
  for (std::int64_t i = 0; i < a.images.numel(); ++i) ASSERT_EQ(a.images[i], b.images[i]);
  float lo = 1, hi = -1;
  for (std::int64_t i = 0; i < a.images.numel(); ++i) {
    lo = std::min(lo, a.images[i]);
    hi = std::max(hi, a.images[i]);
  }
  EXPECT_GE(lo, -1.0f);
  EXPECT_LE(hi, 1.0f);
  EXPECT_LT(lo, hi);
}

TEST(Dataset, DirectoryRoundTripPreservesPixelsAndLabels) {
  const auto dir = temp_dir("dataset");
  const Dataset a = make_toy_faces(2, 3, 16, 7);
  write_image_dir(a, dir);
  const Dataset b = load_image_dir(dir, 16);
  ASSERT_EQ(b.size(), a.size());
  EXPECT_EQ(b.labels, a.labels);
  for (std::int64_t i = 0; i < a.images.numel(); ++i)
    ASSERT_EQ(to_byte(b.images[i]), to_byte(a.images[i]));
  std::filesystem::remove_all(dir);
}

TEST(Dataset, SplitAndGather) {
  const Dataset a = make_toy_faces(2, 2, 8, 1);
  const auto [first, rest] = a.split(3);
  EXPECT_EQ(first.size(), 3);
  EXPECT_EQ(rest.size(), 1);
  EXPECT_EQ(rest.labels[0], 1);
  EXPECT_THROW(a.gather({4}), ParameterError);
  EXPECT_THROW(load_image_dir("/nonexistent/facefill", 8), IoError);
}

}  // namespace
}  // namespace facefill
