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

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "facefill/errors.hpp"
#include "facefill/losses.hpp"
#include "facefill/masks.hpp"
#include "facefill/model_config.hpp"
#include "facefill/optim.hpp"
#include "facefill/styles.hpp"

namespace facefill {

/// Everything a training run depends on. Serialized as flat `key = value`
/// lines with dotted keys; see `config_keys` for the list.
struct TrainConfig {
  ModelConfig model;

  std::int64_t batch_size = 8;
  std::int64_t total_steps = 800000;
  double tau = 0.1;
  double mix_prob = 0.5;
  AdamConfig adam;
  std::int64_t r1_interval = 16;
  double w_avg_decay = 0.995;
  LossWeights loss;
  std::string phi;  // empty: first four layers stochastic, rest exemplar
  std::uint64_t seed = 0;

  /// Brush parameters at the 256x256 reference size; rescaled to the model
  /// resolution when sampling.
  BrushParams brush;

  std::string data_dir;  // empty: procedural toy faces
  std::int64_t toy_identities = 100;
  std::int64_t toy_per_identity = 20;
  std::int64_t holdout = 200;  // trailing images kept for evaluation

  std::int64_t pretrain_identity_steps = 400;
  std::int64_t pretrain_encoder_steps = 400;
  std::int64_t pretrain_batch = 16;

  std::string out_dir = "run";
  std::int64_t checkpoint_every = 1000;
  std::int64_t log_every = 1;

  MixSelector selector() const {
    return phi.empty() ? MixSelector::coarse_stochastic(model.style_layers()) : MixSelector::parse(phi);
  }
  BrushParams brush_at_resolution() const {
    BrushParams b = brush;
    const double s = static_cast<double>(model.resolution) / 256.0;
    b.max_length *= s;
    b.max_brush_width *= s;
    return b;
  }

  void validate() const {
    try {
      model.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (batch_size < 1) fail("train.batch_size must be >= 1");
    if (total_steps < 0) fail("train.total_steps must be >= 0");
    if (!(tau >= 0 && tau <= 1)) fail("train.tau must be in [0,1]");
    if (!(mix_prob >= 0 && mix_prob <= 1)) fail("train.mix_prob must be in [0,1]");
    if (!(adam.lr > 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1))
      fail("invalid optimizer settings");
    if (r1_interval < 1) fail("train.r1_interval must be >= 1");
    if (!(w_avg_decay >= 0 && w_avg_decay <= 1)) fail("train.w_avg_decay must be in [0,1]");
    if (checkpoint_every < 0 || log_every < 1) fail("invalid checkpoint/log cadence");
    if (holdout < 0) fail("data.holdout must be >= 0");
    try {
      loss.validate();
      brush.validate();
      const MixSelector s = selector();
      if (s.layers() != model.style_layers())
        fail("train.phi has " + std::to_string(s.layers()) + " entries; the model has " +
             std::to_string(model.style_layers()) + " style layers");
      if (s.count() == 0) fail("train.phi must select at least one exemplar layer");
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V v{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto r = std::from_chars(first, last, v);
  if (r.ec != std::errc() || r.ptr != last)
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

inline std::vector<std::int64_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::int64_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string join_list(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace detail

/// One configurable key bound to a field of a TrainConfig.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto integer = [&](std::string name, std::string help, auto member) {
      k.push_back({name, help,
                   [member, name](TrainConfig& c, const std::string& t) {
                     c.*member = parse_number<std::remove_reference_t<decltype(c.*member)>>(name, t);
                   },
                   [member](const TrainConfig& c) { return std::to_string(c.*member); }});
    };
    auto real = [&](std::string name, std::string help, auto access) {
      k.push_back({name, help,
                   [access, name](TrainConfig& c, const std::string& t) { access(c) = parse_number<double>(name, t); },
                   [access](const TrainConfig& c) { return format_double(access(const_cast<TrainConfig&>(c))); }});
    };
    auto text = [&](std::string name, std::string help, std::string TrainConfig::*member) {
      k.push_back({name, help, [member](TrainConfig& c, const std::string& t) { c.*member = t; },
                   [member](const TrainConfig& c) { return c.*member; }});
    };
    auto list = [&](std::string name, std::string help, std::vector<std::int64_t> ModelConfig::*member) {
      k.push_back({name, help,
                   [member, name](TrainConfig& c, const std::string& t) { c.model.*member = parse_list(name, t); },
                   [member](const TrainConfig& c) { return join_list(c.model.*member); }});
    };
    auto model_int = [&](std::string name, std::string help, std::int64_t ModelConfig::*member) {
      k.push_back({name, help,
                   [member, name](TrainConfig& c, const std::string& t) {
                     c.model.*member = parse_number<std::int64_t>(name, t);
                   },
                   [member](const TrainConfig& c) { return std::to_string(c.model.*member); }});
    };

    model_int("model.resolution", "output side length (power of two)", &ModelConfig::resolution);
    list("model.channels", "feature widths from 4x4 up to the output resolution", &ModelConfig::channels);
    model_int("model.style_dim", "style vector length", &ModelConfig::style_dim);
    model_int("model.mapping_layers", "fully-connected layers in the mapping network", &ModelConfig::mapping_layers);
    real("model.mapping_lr_mul", "learning-rate multiplier of the mapping network",
         [](TrainConfig& c) -> double& { return c.model.mapping_lr_mul; });
    model_int("model.mbstd_group", "minibatch-stddev group size (0 disables)", &ModelConfig::mbstd_group);
    k.push_back({"model.d_mask_conditioned", "feed the mask to the discriminator",
                 [](TrainConfig& c, const std::string& t) { c.model.d_mask_conditioned = parse_bool("model.d_mask_conditioned", t); },
                 [](const TrainConfig& c) { return std::string(c.model.d_mask_conditioned ? "true" : "false"); }});
    list("model.encoder_channels", "style encoder widths per level", &ModelConfig::encoder_channels);
    list("model.identity_channels", "identity network widths per level", &ModelConfig::identity_channels);
    model_int("model.identity_dim", "identity embedding length", &ModelConfig::identity_dim);
    list("model.perceptual_channels", "perceptual network widths per level", &ModelConfig::perceptual_channels);

    integer("train.batch_size", "images per step", &TrainConfig::batch_size);
    integer("train.total_steps", "training steps", &TrainConfig::total_steps);
    real("train.tau", "probability that the exemplar is the ground truth",
         [](TrainConfig& c) -> double& { return c.tau; });
    real("train.mix_prob", "mixing-regularization probability", [](TrainConfig& c) -> double& { return c.mix_prob; });
    real("train.lr", "Adam learning rate", [](TrainConfig& c) -> double& { return c.adam.lr; });
    real("train.beta1", "Adam first-moment decay", [](TrainConfig& c) -> double& { return c.adam.beta1; });
    real("train.beta2", "Adam second-moment decay", [](TrainConfig& c) -> double& { return c.adam.beta2; });
    integer("train.r1_interval", "discriminator steps between R1 evaluations", &TrainConfig::r1_interval);
    real("train.w_avg_decay", "decay of the running mean style code",
         [](TrainConfig& c) -> double& { return c.w_avg_decay; });
    text("train.phi", "mix selector bitstring (empty: first four layers stochastic)", &TrainConfig::phi);
    k.push_back({"train.seed", "run seed",
                 [](TrainConfig& c, const std::string& t) { c.seed = parse_number<std::uint64_t>("train.seed", t); },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});

    real("loss.lambda_id", "identity loss weight", [](TrainConfig& c) -> double& { return c.loss.lambda_id; });
    real("loss.lambda_lpips", "perceptual loss weight", [](TrainConfig& c) -> double& { return c.loss.lambda_lpips; });
    real("loss.lambda_attr", "attribute loss weight", [](TrainConfig& c) -> double& { return c.loss.lambda_attr; });
    real("loss.gamma", "R1 weight", [](TrainConfig& c) -> double& { return c.loss.gamma; });

    k.push_back({"mask.max_vertex", "brush vertices per walk",
                 [](TrainConfig& c, const std::string& t) { c.brush.max_vertex = parse_number<std::int64_t>("mask.max_vertex", t); },
                 [](const TrainConfig& c) { return std::to_string(c.brush.max_vertex); }});
    real("mask.max_length", "segment length at 256x256", [](TrainConfig& c) -> double& { return c.brush.max_length; });
    real("mask.max_brush_width", "brush width at 256x256",
         [](TrainConfig& c) -> double& { return c.brush.max_brush_width; });
    real("mask.max_angle", "turn angle in degrees", [](TrainConfig& c) -> double& { return c.brush.max_angle; });

    text("data.dir", "directory of training PNGs (empty: procedural toy faces)", &TrainConfig::data_dir);
    integer("data.toy_identities", "toy identities", &TrainConfig::toy_identities);
    integer("data.toy_per_identity", "toy images per identity", &TrainConfig::toy_per_identity);
    integer("data.holdout", "trailing images held out for evaluation", &TrainConfig::holdout);

    integer("pretrain.identity_steps", "identity network pretraining steps", &TrainConfig::pretrain_identity_steps);
    integer("pretrain.encoder_steps", "style encoder pretraining steps", &TrainConfig::pretrain_encoder_steps);
    integer("pretrain.batch", "pretraining batch size", &TrainConfig::pretrain_batch);

    text("run.out_dir", "output directory for checkpoints and logs", &TrainConfig::out_dir);
    integer("run.checkpoint_every", "steps between checkpoints (0: only at the end)", &TrainConfig::checkpoint_every);
    integer("run.log_every", "steps between loss log records", &TrainConfig::log_every);
    return k;
  }();
  return keys;
}

inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      k.set(c, value);
      return;
    }
  throw ConfigError("unknown config key: " + key);
}

/// Applies `key = value` lines; '#' starts a comment.
inline void apply_config_text(TrainConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  apply_config_text(c, text);
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read config file " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Every key, one per line, in registry order.
inline std::string config_to_text(const TrainConfig& c) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(c) + "\n";
  return out;
}

}  // namespace facefill
