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

// facefill command-line entry point.
//
// Exit codes: 0 success, 2 usage error, 3 configuration error, 4 runtime
// failure (I/O, numerics, invalid inputs).

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"

#include "facefill/evaluation.hpp"
#include "facefill/service.hpp"

namespace fs = std::filesystem;
using namespace facefill;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;

/// Dotted config keys exposed as `--key value` options.
struct ConfigOverrides {
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    for (const auto& k : config_keys())
      cmd->add_option_function<std::string>(
             "--" + k.name, [this, name = k.name](const std::string& v) { values[name] = v; }, k.help)
          ->group("Config overrides");
  }
  void apply(TrainConfig& c) const {
    for (const auto& [k, v] : values) set_config_value(c, k, v);
  }
};

TrainConfig read_config(const std::string& path, const ConfigOverrides& overrides) {
  TrainConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      apply_config_text(c, ss.str());
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  overrides.apply(c);
  c.validate();
  return c;
}

int cmd_train(const std::string& config_path, const ConfigOverrides& overrides, bool resume) {
  const TrainConfig cfg = read_config(config_path, overrides);
  auto [train, held_out] = load_training_data(cfg);
  std::cout << "training images: " << train.size() << ", held out: " << held_out.size() << "\n";
  std::unique_ptr<Trainer> t;
  const fs::path latest = fs::path(cfg.out_dir) / "latest.ffck";
  if (resume && fs::exists(latest)) {
    t = std::make_unique<Trainer>(CheckpointFile::load(latest), std::move(train));
    t->mutable_config().total_steps = cfg.total_steps;
    std::cout << "resumed from " << latest.string() << " at step " << t->step_count() << "\n";
  } else {
    if (resume) std::cout << "no checkpoint at " << latest.string() << "; starting fresh\n";
    t = std::make_unique<Trainer>(cfg, std::move(train));
    const auto& p = t->pretrain_report();
    std::cout << "stand-ins pretrained: identity loss " << p.identity_final_loss << ", encoder loss "
              << p.encoder_final_loss << "\n";
  }
  const std::int64_t every = std::max<std::int64_t>(1, cfg.total_steps / 50);
  t->train(cfg.total_steps, [&](const StepLosses& s) {
    if (s.step % every == 0 || s.step == cfg.total_steps)
      std::cout << "step " << s.step << "  total_g " << s.total_g << "  adv_g " << s.adv_g << "  id " << s.id
                << "  lpips " << s.lpips << "  attr " << s.attr << "  adv_d " << s.adv_d
                << (s.r1_applied ? "  r1 " + std::to_string(s.r1) : "") << std::endl;
  });
  std::cout << "checkpoint: " << t->latest_path().string() << "\n";
  return 0;
}

struct InferArgs {
  std::string checkpoint, input, mask, exemplar, exemplar2, output, phi;
  std::vector<std::int64_t> crossover;
  double psi = 1.0;
  std::uint64_t seed = 0;
  bool resize = false;
};

int cmd_infer(const InferArgs& a) {
  const auto engine = InpaintEngine::from_file(a.checkpoint);
  InpaintRequest r;
  r.input = read_png(a.input, 3);
  r.mask = read_png(a.mask, 1);
  r.exemplar = read_png(a.exemplar, 3);
  if (!a.exemplar2.empty()) r.exemplar2 = read_png(a.exemplar2, 3);
  if (!a.phi.empty()) r.phi = MixSelector::parse(a.phi);
  if (!a.crossover.empty()) r.crossover = std::make_pair(a.crossover.at(0), a.crossover.at(1));
  r.psi = a.psi;
  r.seed = a.seed;
  r.resize = a.resize;
  const InpaintResponse out = engine->run(std::move(r));
  write_png(a.output, out.output);
  std::cout << "wrote " << a.output << " (phi " << out.phi << ", seed " << out.seed << ", " << out.latency_ms
            << " ms)\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data_dir, output;
  std::int64_t samples = 200;
  std::uint64_t seed = 1;
  bool initial = false;
};

int cmd_evaluate(const EvalArgs& a) {
  const CheckpointFile ck = CheckpointFile::load(a.checkpoint);
  auto [cfg, nets] = load_networks(ck);
  if (a.initial) {
    // Same model with its trainable networks reset to initialization.
    auto fresh = std::make_unique<Networks>(cfg.model, derive_seed(cfg.seed, kInitStream));
    for (auto& [set, ps] : fresh->sets()) {
      if (set != "E" && set != "R") continue;
      for (const auto& [name, v] : ps->items())
        const_cast<Var<float>&>(v).mutable_value() = ck.get(set + "/" + name);
    }
    fresh->freeze_stand_ins();
    nets = std::move(fresh);
  }
  const Dataset reals = a.data_dir.empty() ? load_training_data(cfg).second
                                           : load_image_dir(a.data_dir, cfg.model.resolution);
  const EvalReport rep = evaluate(model_inpainter(*nets, cfg.selector()), reals, default_bins(), a.samples, a.seed);
  nlohmann::json j = rep.to_json();
  j["checkpoint"] = a.checkpoint;
  j["step"] = a.initial ? 0 : ck.meta.value("step", 0);
  j["real_images"] = reals.size();
  const std::string text = j.dump(2);
  if (a.output.empty()) {
    std::cout << text << "\n";
  } else {
    write_file(a.output, text.data(), text.size());
    for (const auto& b : rep.bins)
      std::printf("%-8s fid %10.4f  u-ids %.4f  p-ids %.4f\n", b.bin.name.c_str(), b.fid, b.u_ids, b.p_ids);
    std::cout << "report: " << a.output << "\n";
  }
  return 0;
}

struct MaskArgs {
  std::int64_t resolution = 64, count = 16;
  std::uint64_t seed = 0;
  std::string output, kind = "freeform";
  double center_fraction = 0.5;
};

int cmd_mask_gen(const MaskArgs& a) {
  fs::create_directories(a.output);
  Rng rng(a.seed);
  const BrushParams brush = BrushParams::scaled_for(a.resolution);
  for (std::int64_t i = 0; i < a.count; ++i) {
    const BinaryMask m = a.kind == "center" ? center_mask(a.resolution, a.resolution, a.center_fraction)
                                            : sample_freeform(rng, a.resolution, a.resolution, brush);
    char name[32];
    std::snprintf(name, sizeof name, "mask_%05lld.png", static_cast<long long>(i));
    write_png(fs::path(a.output) / name, mask_to_image(m));
  }
  std::cout << "wrote " << a.count << " masks to " << a.output << "\n";
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const std::string& checkpoint, const std::string& host, int port) {
  const auto engine = InpaintEngine::from_file(checkpoint);
  httplib::Server server;
  install_routes(server, *engine);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "serving model " << engine->model_hash().substr(0, 12) << " on http://" << host << ":" << bound
            << std::endl;
  server.listen_after_bind();
  return 0;
}

int cmd_make_toyset(std::int64_t identities, std::int64_t per, std::int64_t res, std::uint64_t seed,
                    const std::string& out) {
  write_image_dir(make_toy_faces(identities, per, res, seed), out);
  std::cout << "wrote " << identities * per << " images to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facefill: exemplar-guided face inpainting"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path;
  bool resume = false;
  ConfigOverrides train_overrides;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("-c,--config", config_path, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
  train->add_flag("--resume", resume, "Continue from <run.out_dir>/latest.ffck when present");
  train_overrides.attach(train);

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Inpaint one image");
  infer->add_option("--checkpoint", ia.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", ia.input, "Input image (PNG)")->required()->check(CLI::ExistingFile);
  infer->add_option("--mask", ia.mask, "Mask image (PNG, >= 128 marks a hole)")->required()->check(CLI::ExistingFile);
  infer->add_option("--exemplar", ia.exemplar, "Exemplar image (PNG)")->required()->check(CLI::ExistingFile);
  infer->add_option("--exemplar2", ia.exemplar2, "Second exemplar for crossover mixing")->check(CLI::ExistingFile);
  infer->add_option("--crossover", ia.crossover, "Layers i j (1-based, inclusive) taken from --exemplar2")
      ->expected(2);
  infer->add_option("--phi", ia.phi, "Selector bitstring; 1 takes the exemplar layer");
  infer->add_option("--psi", ia.psi, "Truncation in [0,1]")->capture_default_str();
  infer->add_option("--seed", ia.seed, "Noise and latent seed")->capture_default_str();
  infer->add_flag("--resize", ia.resize, "Center-crop and resample inputs to the model resolution");
  infer->add_option("-o,--output", ia.output, "Output PNG")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("evaluate", "Binned FID / U-IDS / P-IDS report");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", ea.data_dir, "Real images (default: the run's held-out split)")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--samples", ea.samples, "Inpainted samples per bin")->capture_default_str();
  eval->add_option("--seed", ea.seed, "Mask and noise seed")->capture_default_str();
  eval->add_flag("--initial", ea.initial, "Evaluate the run's initialization instead of its weights");
  eval->add_option("-o,--output", ea.output, "Write the JSON report here instead of stdout");

  MaskArgs ma;
  auto* masks = app.add_subcommand("mask-gen", "Write sample masks as PNGs");
  masks->add_option("--resolution", ma.resolution, "Mask side")->capture_default_str();
  masks->add_option("--count", ma.count, "Number of masks")->capture_default_str();
  masks->add_option("--seed", ma.seed, "Sampler seed")->capture_default_str();
  masks->add_option("--kind", ma.kind, "freeform or center")
      ->check(CLI::IsMember({"freeform", "center"}))
      ->capture_default_str();
  masks->add_option("--center-fraction", ma.center_fraction, "Side fraction of the center hole")
      ->capture_default_str();
  masks->add_option("-o,--output", ma.output, "Output directory")->required();

  std::string serve_ckpt, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  serve->add_option("--checkpoint", serve_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();

  std::int64_t toy_ids = 100, toy_per = 20, toy_res = 64;
  std::uint64_t toy_seed = 0;
  std::string toy_out;
  auto* toy = app.add_subcommand("make-toyset", "Render the procedural face corpus to PNGs");
  toy->add_option("--identities", toy_ids, "Number of identities")->capture_default_str();
  toy->add_option("--per-identity", toy_per, "Images per identity")->capture_default_str();
  toy->add_option("--resolution", toy_res, "Image side")->capture_default_str();
  toy->add_option("--seed", toy_seed, "Seed")->capture_default_str();
  toy->add_option("-o,--output", toy_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(config_path, train_overrides, resume);
    if (*infer) {
      if (!ia.crossover.empty() && ia.exemplar2.empty())
        throw ParameterError("--crossover needs --exemplar2");
      return cmd_infer(ia);
    }
    if (*eval) return cmd_evaluate(ea);
    if (*masks) return cmd_mask_gen(ma);
    if (*serve) return cmd_serve(serve_ckpt, host, port);
    if (*toy) return cmd_make_toyset(toy_ids, toy_per, toy_res, toy_seed, toy_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RequestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
