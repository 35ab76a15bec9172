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

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "facefill/errors.hpp"

namespace facefill {

inline constexpr std::int64_t kStyleDim = 512;

/// Network shapes shared by every component of a model.
struct ModelConfig {
  std::int64_t resolution = 64;
  /// Feature width per resolution, from 4x4 up to `resolution`.
  std::vector<std::int64_t> channels{512, 512, 256, 128, 64};
  std::int64_t style_dim = kStyleDim;
  std::int64_t mapping_layers = 8;
  double mapping_lr_mul = 0.01;
  /// Group size of the minibatch-stddev feature; 0 disables it.
  std::int64_t mbstd_group = 4;
  /// Feed the hole mask to the discriminator as a fourth channel.
  bool d_mask_conditioned = false;
  /// Widths of the frozen stand-in networks (style encoder, identity,
  /// perceptual), one entry per pyramid level starting at full resolution.
  std::vector<std::int64_t> encoder_channels{32, 32, 64, 64, 64};
  std::vector<std::int64_t> identity_channels{16, 32, 32, 64, 64};
  std::int64_t identity_dim = 128;
  std::vector<std::int64_t> perceptual_channels{16, 32, 32, 64};

  std::int64_t levels() const { return std::countr_zero(static_cast<std::uint64_t>(resolution)) - 1; }

  /// Two modulated convolutions per resolution above 4x4, one at 4x4, plus
  /// the final image layer.
  std::int64_t style_layers() const {
    return 2 * std::countr_zero(static_cast<std::uint64_t>(resolution)) - 2;
  }

  std::int64_t channels_at(std::int64_t res) const {
    const auto idx = std::countr_zero(static_cast<std::uint64_t>(res)) - 2;
    if (res < 4 || (res & (res - 1)) || idx >= static_cast<std::int64_t>(channels.size()))
      throw ParameterError("no channel width configured for resolution " + std::to_string(res));
    return channels[static_cast<std::size_t>(idx)];
  }

  /// Global code c is two style_dim vectors.
  std::int64_t global_code_dim() const { return 2 * style_dim; }

  void validate() const {
    if (resolution < 8 || (resolution & (resolution - 1)))
      throw ParameterError("resolution must be a power of two >= 8, got " +
                           std::to_string(resolution));
    if (static_cast<std::int64_t>(channels.size()) != levels())
      throw ParameterError("expected " + std::to_string(levels()) +
                           " channel widths (4x4 .. " + std::to_string(resolution) +
                           "), got " + std::to_string(channels.size()));
    auto check_stand_in = [&](const std::vector<std::int64_t>& ch, const char* name) {
      if (static_cast<std::int64_t>(ch.size()) > levels() || ch.empty())
        throw ParameterError(std::string(name) + " needs between 1 and " +
                             std::to_string(levels()) + " levels");
    };
    check_stand_in(encoder_channels, "encoder_channels");
    check_stand_in(identity_channels, "identity_channels");
    check_stand_in(perceptual_channels, "perceptual_channels");
    for (auto c : channels)
      if (c <= 0) throw ParameterError("channel widths must be positive");
    if (style_dim <= 0 || mapping_layers <= 0 || mbstd_group < 0 || identity_dim <= 0)
      throw ParameterError("invalid model dimensions");
  }
};

}  // namespace facefill
