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

#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "facefill/image_io.hpp"
#include "facefill/tensor.hpp"

namespace facefill {

/// Single-file container: "FFCK", u32 version, u64 header length, a JSON
/// header, then float32 tensors back to back in header order. The header
/// lists each tensor's name, shape and byte offset into the payload.
struct CheckpointFile {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  void put(const std::string& name, const Tensor<float>& t) { tensors.emplace_back(name, t); }

  const Tensor<float>& get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw IoError("checkpoint has no tensor named " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& [n, _] : tensors)
      if (n == name) return true;
    return false;
  }

  std::vector<std::uint8_t> encode() const {
    nlohmann::json header;
    header["meta"] = meta;
    nlohmann::json list = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
      list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
      offset += static_cast<std::uint64_t>(t.numel()) * 4;
    }
    header["tensors"] = list;
    const std::string text = header.dump();
    std::vector<std::uint8_t> out{'F', 'F', 'C', 'K'};
    auto put_raw = [&](const void* p, std::size_t n) {
      const auto* b = static_cast<const std::uint8_t*>(p);
      out.insert(out.end(), b, b + n);
    };
    const std::uint32_t version = kVersion;
    const std::uint64_t len = text.size();
    put_raw(&version, 4);
    put_raw(&len, 8);
    put_raw(text.data(), text.size());
    out.reserve(out.size() + offset);
    for (const auto& [_, t] : tensors) put_raw(t.data(), static_cast<std::size_t>(t.numel()) * 4);
    return out;
  }

  static CheckpointFile decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "FFCK", 4) != 0) throw IoError("not a checkpoint file");
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&len, bytes.data() + 8, 8);
    if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    if (16 + len > bytes.size()) throw IoError("truncated checkpoint header");
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(16 + len));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("corrupt checkpoint header: ") + e.what());
    }
    CheckpointFile f;
    f.meta = header.at("meta");
    const std::uint64_t base = 16 + len;
    std::uint64_t expected = 0;
    for (const auto& e : header.at("tensors")) {
      const auto offset = e.at("offset").get<std::uint64_t>();
      if (offset != expected) throw IoError("checkpoint tensors are not contiguous");
      Tensor<float> t(e.at("shape").get<Shape>());
      const std::uint64_t n = static_cast<std::uint64_t>(t.numel()) * 4;
      if (base + offset + n > bytes.size()) throw IoError("truncated checkpoint payload");
      std::memcpy(t.data(), bytes.data() + base + offset, n);
      expected += n;
      f.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    if (base + expected != bytes.size()) throw IoError("trailing bytes after checkpoint payload");
    return f;
  }

  /// Writes through a temporary file and renames, so readers never see a
  /// partial checkpoint.
  void save(const std::filesystem::path& p) const {
    const auto bytes = encode();
    const std::filesystem::path tmp = p.string() + ".tmp";
    write_file(tmp, bytes.data(), bytes.size());
    std::filesystem::rename(tmp, p);
  }

  static CheckpointFile load(const std::filesystem::path& p) {
    try {
      return decode(read_file(p));
    } catch (const IoError& e) {
      throw IoError(p.string() + ": " + e.what());
    }
  }
};

}  // namespace facefill
