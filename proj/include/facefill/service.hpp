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

#include <atomic>
#include <chrono>
#include <cstdio>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "json.hpp"

#include "facefill/checkpoint.hpp"
#include "facefill/hash.hpp"
#include "facefill/image_io.hpp"
#include "facefill/training.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro collides with
// Eigen parameter names.
#include "httplib.h"

namespace facefill {

/// A request failure carrying its HTTP status and, for malformed input, the
/// offending field.
class RequestError : public std::runtime_error {
 public:
  RequestError(int status, std::string field, const std::string& msg)
      : std::runtime_error(msg), status_(status), field_(std::move(field)) {}
  int status() const { return status_; }
  const std::string& field() const { return field_; }

 private:
  int status_;
  std::string field_;
};

struct InpaintRequest {
  Image input, mask, exemplar;
  std::optional<Image> exemplar2;
  std::optional<MixSelector> phi;  // default: the model's training selector
  std::optional<std::pair<std::int64_t, std::int64_t>> crossover;
  double psi = 1.0;
  std::uint64_t seed = 0;
  bool resize = false;
};

struct InpaintResponse {
  Image output;
  std::uint64_t seed = 0;
  double psi = 1.0;
  std::string phi;
  std::optional<std::pair<std::int64_t, std::int64_t>> crossover;
  std::string model_hash;
  double latency_ms = 0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"image", base64_encode(encode_png(output))},
                     {"seed", seed},
                     {"psi", psi},
                     {"phi", phi},
                     {"model_hash", model_hash},
                     {"latency_ms", latency_ms}};
    if (crossover) j["crossover"] = {crossover->first, crossover->second};
    return j;
  }
};

/// Serialized inference over one loaded checkpoint. Parameters are never
/// modified after construction.
class InpaintEngine {
 public:
  /// `source_bytes` are the encoded checkpoint, hashed to identify the model.
  InpaintEngine(const CheckpointFile& ck, const std::vector<std::uint8_t>& source_bytes)
      : meta_(ck.meta) {
    auto [cfg, nets] = load_networks(ck);
    cfg_ = std::move(cfg);
    nets_ = std::move(nets);
    Sha256 h;
    h.update(std::string_view(reinterpret_cast<const char*>(source_bytes.data()), source_bytes.size()));
    model_hash_ = h.hex();
  }

  static std::unique_ptr<InpaintEngine> from_file(const std::filesystem::path& p) {
    const auto bytes = read_file(p);
    return std::make_unique<InpaintEngine>(CheckpointFile::decode(bytes), bytes);
  }

  std::int64_t resolution() const { return cfg_.model.resolution; }
  std::int64_t style_layers() const { return cfg_.model.style_layers(); }
  const std::string& model_hash() const { return model_hash_; }
  const TrainConfig& config() const { return cfg_; }

  /// Live hash of every parameter set; constant for the engine's lifetime.
  std::string parameter_hash() const {
    std::lock_guard lock(mu_);
    Sha256 h;
    for (auto& [name, ps] : nets_->sets()) h.update(name + ":" + ps->hash() + ";");
    return h.hex();
  }

  nlohmann::json model_info() const {
    return {{"model_hash", model_hash_},
            {"parameter_hash", parameter_hash()},
            {"resolution", resolution()},
            {"style_layers", style_layers()},
            {"style_dim", cfg_.model.style_dim},
            {"default_phi", cfg_.selector().str()},
            {"step", meta_.value("step", 0)},
            {"stand_ins", meta_.value("stand_ins", nlohmann::json::object())},
            {"config", meta_.value("config", std::string())}};
  }

  InpaintResponse run(InpaintRequest req) const {
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t res = resolution(), layers = style_layers();
    conform(req.input, "input", req.resize);
    conform(req.mask, "mask", req.resize);
    conform(req.exemplar, "exemplar", req.resize);
    if (req.exemplar2) conform(*req.exemplar2, "exemplar2", req.resize);
    const MixSelector phi = req.phi ? *req.phi : cfg_.selector();
    if (phi.layers() != layers)
      throw RequestError(400, "phi", "phi needs " + std::to_string(layers) + " entries, got " +
                                         std::to_string(phi.layers()));
    if (!(req.psi >= 0.0 && req.psi <= 1.0)) throw RequestError(400, "psi", "psi must be in [0,1]");
    if (req.crossover) {
      const auto [i, j] = *req.crossover;
      if (i < 1 || j < i || j > layers)
        throw RequestError(400, "crossover", "crossover range must satisfy 1 <= i <= j <= " + std::to_string(layers));
      if (!req.exemplar2) throw RequestError(400, "exemplar2", "crossover needs a second exemplar");
    }

    const BinaryMask m = image_to_mask(req.mask);
    Tensor<float> input = image_to_tensor(req.input);
    const Tensor<float> mask = stack_masks<float>({m});
    for (std::int64_t i = 0; i < input.numel(); ++i)
      if (mask[i % (res * res)] != 0.0f) input[i] = 0.0f;

    Tensor<float> out;
    {
      std::lock_guard lock(mu_);
      NoGrad no_grad;
      Rng rng(req.seed);
      const Tensor<float> z = sample_latents<float>(rng, 1, cfg_.model.style_dim);
      const std::uint64_t noise_seed = rng.next_u64();
      const Var<float> stochastic =
          truncate(nets_->f(Var<float>(z)), nets_->f.average_code(), static_cast<float>(req.psi));
      auto code_for = [&](const Image& ex) {
        return mix_styles(nets_->E(Var<float>(image_to_tensor(ex))), stochastic, phi);
      };
      Var<float> code = code_for(req.exemplar);
      if (req.crossover) code = crossover_mix(code, code_for(*req.exemplar2), req.crossover->first,
                                              req.crossover->second);
      out = nets_->G.generate(Var<float>(input), mask, code, noise_seed).value();
    }

    InpaintResponse r;
    r.output = tensor_to_image(out);
    r.seed = req.seed;
    r.psi = req.psi;
    r.phi = phi.str();
    r.crossover = req.crossover;
    r.model_hash = model_hash_;
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

 private:
  void conform(Image& im, const char* field, bool resize) const {
    const std::int64_t res = resolution();
    if (im.h == res && im.w == res) return;
    if (!resize)
      throw RequestError(422, field, std::string(field) + " is " + std::to_string(im.w) + "x" +
                                         std::to_string(im.h) + ", model expects " + std::to_string(res) + "x" +
                                         std::to_string(res) + " (set resize to true to resample)");
    im = center_crop_resize(im, res);
  }

  TrainConfig cfg_;
  std::unique_ptr<Networks> nets_;
  nlohmann::json meta_;
  std::string model_hash_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// JSON request parsing.

namespace detail {

inline Image field_image(const nlohmann::json& body, const char* field, int channels) {
  if (!body.contains(field)) throw RequestError(400, field, std::string("missing field '") + field + "'");
  const auto& v = body.at(field);
  if (!v.is_string()) throw RequestError(400, field, std::string(field) + " must be a base64 PNG string");
  try {
    return decode_png(base64_decode(v.get<std::string>()), channels);
  } catch (const std::exception& e) {
    throw RequestError(400, field, std::string(field) + ": " + e.what());
  }
}

}  // namespace detail

/// Parses an /inpaint or /mix body. `mix` requires exemplar2 and crossover.
inline InpaintRequest parse_inpaint_request(const std::string& text, bool mix) {
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(400, "body", std::string("invalid JSON: ") + e.what());
  }
  if (!body.is_object()) throw RequestError(400, "body", "request body must be a JSON object");
  InpaintRequest r;
  r.input = detail::field_image(body, "input", 3);
  r.mask = detail::field_image(body, "mask", 1);
  r.exemplar = detail::field_image(body, "exemplar", 3);
  if (mix || body.contains("exemplar2")) r.exemplar2 = detail::field_image(body, "exemplar2", 3);
  try {
    if (body.contains("phi")) r.phi = MixSelector::parse(body.at("phi").get<std::string>());
  } catch (const std::exception& e) {
    throw RequestError(400, "phi", std::string("phi: ") + e.what());
  }
  try {
    if (body.contains("crossover")) {
      const auto c = body.at("crossover").get<std::vector<std::int64_t>>();
      if (c.size() != 2) throw ParameterError("expected [i, j]");
      r.crossover = std::make_pair(c[0], c[1]);
    }
  } catch (const std::exception& e) {
    throw RequestError(400, "crossover", std::string("crossover: ") + e.what());
  }
  if (mix && !r.crossover) throw RequestError(400, "crossover", "missing field 'crossover'");
  auto number = [&](const char* f, auto& dst) {
    try {
      if (body.contains(f)) dst = body.at(f).get<std::decay_t<decltype(dst)>>();
    } catch (const std::exception&) {
      throw RequestError(400, f, std::string(f) + " has the wrong type");
    }
  };
  number("psi", r.psi);
  number("seed", r.seed);
  number("resize", r.resize);
  return r;
}

/// Builds the JSON body of a request (the inverse of parse_inpaint_request).
inline nlohmann::json inpaint_request_json(const InpaintRequest& r) {
  nlohmann::json j{{"input", base64_encode(encode_png(r.input))},
                   {"mask", base64_encode(encode_png(r.mask))},
                   {"exemplar", base64_encode(encode_png(r.exemplar))},
                   {"psi", r.psi},
                   {"seed", r.seed},
                   {"resize", r.resize}};
  if (r.exemplar2) j["exemplar2"] = base64_encode(encode_png(*r.exemplar2));
  if (r.phi) j["phi"] = r.phi->str();
  if (r.crossover) j["crossover"] = {r.crossover->first, r.crossover->second};
  return j;
}

// ---------------------------------------------------------------------------
// HTTP routes.

inline void install_routes(httplib::Server& server, const InpaintEngine& engine) {
  auto reply = [](httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto handle = [&engine, reply](bool mix) {
    return [&engine, reply, mix](const httplib::Request& req, httplib::Response& res) {
      try {
        reply(res, 200, engine.run(parse_inpaint_request(req.body, mix)).to_json());
      } catch (const RequestError& e) {
        reply(res, e.status(), {{"error", e.what()}, {"field", e.field()}});
      } catch (const std::exception& e) {
        static std::atomic<std::uint64_t> counter{0};
        char id[32];
        std::snprintf(id, sizeof id, "%016llx",
                      static_cast<unsigned long long>(derive_seed(
                          static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()),
                          counter++)));
        std::fprintf(stderr, "request %s failed: %s\n", id, e.what());
        reply(res, 500, {{"error", "internal error"}, {"id", id}});
      }
    };
  };
  server.Post("/inpaint", handle(false));
  server.Post("/mix", handle(true));
  server.Get("/model", [&engine, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, engine.model_info());
  });
  server.Get("/health", [reply](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}});
  });
}

}  // namespace facefill
