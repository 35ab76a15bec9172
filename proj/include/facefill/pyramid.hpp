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

#include <string>
#include <vector>

#include "facefill/nn.hpp"

namespace facefill {

/// 1x1 input projection followed by (3x3 conv, activation, 2x average pool)
/// per level. Returns the activation of every level before pooling.
template <typename T>
class DownPyramid {
 public:
  DownPyramid() = default;
  DownPyramid(ParamSet<T>& ps, const std::string& name, std::int64_t in_ch,
              const std::vector<std::int64_t>& widths, Rng& rng) {
    if (widths.empty()) throw ParameterError("pyramid needs at least one level");
    from_input_ = Conv2d<T>(ps, name + ".from_input", in_ch, widths[0], 1, rng);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::int64_t out = i + 1 < widths.size() ? widths[i + 1] : widths[i];
      convs_.emplace_back(ps, name + ".level" + std::to_string(i), widths[i], out, 3, rng);
    }
    widths_ = widths;
  }

  std::vector<Var<T>> features(const Var<T>& x) const {
    std::vector<Var<T>> out;
    Var<T> h = lrelu(from_input_(x));
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = lrelu(convs_[i](h));
      out.push_back(h);
      if (i + 1 < convs_.size()) h = avg_pool2(h);
    }
    return out;
  }

  /// Channel count of the last level.
  std::int64_t out_channels() const { return convs_.back().co; }
  std::size_t depth() const { return convs_.size(); }

 private:
  Conv2d<T> from_input_;
  std::vector<Conv2d<T>> convs_;
  std::vector<std::int64_t> widths_;
};

}  // namespace facefill
