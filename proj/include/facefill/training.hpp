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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "facefill/checkpoint.hpp"
#include "facefill/config.hpp"
#include "facefill/losses.hpp"
#include "facefill/networks.hpp"
#include "facefill/svgl.hpp"

namespace facefill {

/// Independent stream seeds from one run seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kInitStream = 1, kPretrainStream = 2, kTrainStream = 3, kDataStream = 4 };

/// Training and held-out images for a config: PNGs from data.dir, or the
/// procedural toy faces. The last `holdout` images are held out.
inline std::pair<Dataset, Dataset> load_training_data(const TrainConfig& cfg) {
  const Dataset all = cfg.data_dir.empty()
                          ? make_toy_faces(cfg.toy_identities, cfg.toy_per_identity, cfg.model.resolution,
                                           derive_seed(cfg.seed, kDataStream))
                          : load_image_dir(cfg.data_dir, cfg.model.resolution);
  if (cfg.holdout >= all.size())
    throw ConfigError("data.holdout (" + std::to_string(cfg.holdout) + ") leaves no training images out of " +
                      std::to_string(all.size()));
  return all.split(all.size() - cfg.holdout);
}

/// Visits the dataset in a fresh random order every epoch.
class EpochSampler {
 public:
  std::int64_t next(std::int64_t n, Rng& rng) {
    if (pos_ >= static_cast<std::int64_t>(order_.size())) {
      order_.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) order_[static_cast<std::size_t>(i)] = i;
      for (std::int64_t i = n - 1; i > 0; --i)
        std::swap(order_[static_cast<std::size_t>(i)], order_[static_cast<std::size_t>(rng.uniform_int(0, i))]);
      pos_ = 0;
    }
    return order_[static_cast<std::size_t>(pos_++)];
  }
  const std::vector<std::int64_t>& order() const { return order_; }
  std::int64_t position() const { return pos_; }
  void restore(std::vector<std::int64_t> order, std::int64_t pos) {
    order_ = std::move(order);
    pos_ = pos;
  }

 private:
  std::vector<std::int64_t> order_;
  std::int64_t pos_ = 0;
};

struct Batch {
  Tensor<float> gt, exemplar, input;               // [N,3,H,W]
  Tensor<float> mask, weight, reverse_weight;      // [N,1,H,W]
  Tensor<float> z1, z2;                            // [N,D]
  std::vector<bool> same;                          // exemplar is the ground truth
  std::vector<std::int64_t> gt_index, exemplar_index;
};

/// Per sample: ground truth from the epoch order; r ~ U[0,1); if r > tau the
/// exemplar is another training image, otherwise the ground truth itself.
/// Then a free-form mask, its confidence and reverse weights, and latents.
inline Batch assemble_batch(const Dataset& data, Rng& rng, const TrainConfig& cfg, EpochSampler& sampler) {
  if (data.size() == 0) throw ParameterError("empty dataset");
  const std::int64_t n = cfg.batch_size, res = data.resolution();
  Batch b;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t g = sampler.next(data.size(), rng);
    const double r = rng.uniform();
    std::int64_t e = g;
    if (r > cfg.tau && data.size() > 1) {
      e = rng.uniform_int(0, data.size() - 2);
      if (e >= g) ++e;
    }
    b.gt_index.push_back(g);
    b.exemplar_index.push_back(e);
    b.same.push_back(e == g);
  }
  b.gt = data.gather(b.gt_index);
  b.exemplar = data.gather(b.exemplar_index);
  std::vector<BinaryMask> masks;
  std::vector<WeightMask> weights, reverse;
  const BrushParams brush = cfg.brush_at_resolution();
  for (std::int64_t i = 0; i < n; ++i) {
    masks.push_back(sample_freeform(rng, res, res, brush));
    weights.push_back(confidence_weight(masks.back()));
    reverse.push_back(reverse_weight(weights.back(), masks.back()));
  }
  b.mask = stack_masks<float>(masks);
  b.weight = stack_weights<float>(weights);
  b.reverse_weight = stack_weights<float>(reverse);
  b.input = b.gt;
  const std::int64_t hw = res * res;
  for (std::int64_t i = 0; i < b.input.numel(); ++i)
    if (b.mask[(i / (3 * hw)) * hw + i % hw] != 0.0f) b.input[i] = 0.0f;
  b.z1 = sample_latents<float>(rng, n, cfg.model.style_dim);
  b.z2 = sample_latents<float>(rng, n, cfg.model.style_dim);
  return b;
}

struct StepLosses {
  std::int64_t step = 0;
  double adv_g = 0, id = 0, lpips = 0, attr = 0, total_g = 0, adv_d = 0, r1 = 0;
  bool r1_applied = false;

  std::vector<std::pair<std::string, double>> terms() const {
    return {{"adv_g", adv_g}, {"id", id},       {"lpips", lpips}, {"attr", attr},
            {"total_g", total_g}, {"adv_d", adv_d}, {"r1", r1}};
  }
};

/// Runs the alternating generator/discriminator updates and owns all run
/// state: networks, optimizers, RNG, data order and step counter.
class Trainer {
 public:
  /// Fresh run: initializes every network, pretrains and freezes the
  /// stand-ins on `train`.
  Trainer(const TrainConfig& cfg, Dataset train) : cfg_(cfg), data_(std::move(train)) {
    cfg_.validate();
    nets_ = std::make_unique<Networks>(cfg_.model, derive_seed(cfg_.seed, kInitStream));
    Rng pre(derive_seed(cfg_.seed, kPretrainStream));
    pretrain_.identity_final_loss = pretrain_identity(nets_->R, data_, cfg_.pretrain_identity_steps,
                                                      cfg_.pretrain_batch, pre);
    pretrain_.encoder_final_loss = pretrain_encoder(nets_->E, cfg_.model, data_, cfg_.pretrain_encoder_steps,
                                                    cfg_.pretrain_batch, pre);
    pretrain_.identity = "cosine-softmax identity classifier, " + std::to_string(cfg_.pretrain_identity_steps) +
                         " steps";
    pretrain_.encoder = "autoencoder with auxiliary decoder, " + std::to_string(cfg_.pretrain_encoder_steps) +
                        " steps";
    nets_->freeze_stand_ins();
    rng_ = Rng(derive_seed(cfg_.seed, kTrainStream));
    make_optimizers();
    frozen_ = frozen_hashes();
  }

  /// Resumes from a checkpoint written by `checkpoint()`.
  Trainer(const CheckpointFile& ck, Dataset train) : data_(std::move(train)) {
    cfg_ = parse_config(ck.meta.at("config").get<std::string>());
    nets_ = std::make_unique<Networks>(cfg_.model, derive_seed(cfg_.seed, kInitStream));
    restore_params(*nets_, ck);
    nets_->freeze_stand_ins();
    make_optimizers();
    restore_adam(opt_g_, "opt_g", ck);
    restore_adam(opt_d_, "opt_d", ck);
    opt_g_.set_steps(ck.meta.at("opt_g_steps").get<std::int64_t>());
    opt_d_.set_steps(ck.meta.at("opt_d_steps").get<std::int64_t>());
    rng_.restore(ck.meta.at("rng").get<std::string>());
    sampler_.restore(ck.meta.at("data_order").get<std::vector<std::int64_t>>(),
                     ck.meta.at("data_position").get<std::int64_t>());
    step_ = ck.meta.at("step").get<std::int64_t>();
    pretrain_.identity = ck.meta.at("stand_ins").at("R").get<std::string>();
    pretrain_.encoder = ck.meta.at("stand_ins").at("E").get<std::string>();
    frozen_ = ck.meta.at("frozen_hashes").get<std::map<std::string, std::string>>();
    if (frozen_ != frozen_hashes()) throw IoError("frozen network hashes do not match the checkpoint metadata");
  }

  /// One generator/mapping update followed by one discriminator update.
  StepLosses step() {
    Networks& n = *nets_;
    const Batch b = assemble_batch(data_, rng_, cfg_, sampler_);
    const std::uint64_t noise_seed = rng_.next_u64();
    const MixSelector phi = cfg_.selector();
    StepLosses out;
    out.step = step_ + 1;

    // Generator and mapping network.
    Tensor<float> w_exe;
    {
      NoGrad no_grad;
      w_exe = n.E(Var<float>(b.exemplar)).value();
    }
    const MixedCode<float> mixed = mixing_regularization(b.z1, b.z2, rng_, cfg_.mix_prob, n.f);
    const Var<float> w_hat = mix_styles(Var<float>(w_exe), mixed.code, phi);
    const Var<float> input(b.input);
    Var<float> out_img;
    GeneratorLossParts<float> parts;
    {
      RequiresGradOff freeze_d(n.D.params());
      out_img = composite(input, n.G.predict(input, constant(b.mask), w_hat, noise_seed), b.mask);
      parts.adv = adv_loss_g(n.critic(out_img, b.mask));
      parts.id = identity_loss(out_img, Var<float>(b.exemplar), n.R);
      parts.lpips = lpips_loss(svgl_apply(out_img, b.weight), Var<float>(b.gt), n.F, b.same);
      parts.attr = attribute_loss(svgl_apply(out_img, b.reverse_weight), w_hat, phi, n.E);
      const Var<float> total = total_objective(parts, cfg_.loss);
      out.adv_g = parts.adv.item();
      out.id = parts.id.item();
      out.lpips = parts.lpips.item();
      out.attr = parts.attr.item();
      out.total_g = total.item();
      check_finite(out, "generator");
      opt_g_.step(grad(total, opt_g_.vars()));
    }
    {
      const std::int64_t N = b.z1.dim(0), L = cfg_.model.style_layers(), D = cfg_.model.style_dim;
      Tensor<float> first({N, D});
      for (std::int64_t i = 0; i < N; ++i)
        std::copy_n(mixed.code.value().data() + i * L * D, D, first.data() + i * D);
      n.f.track_average(first, static_cast<float>(cfg_.w_avg_decay));
    }

    // Discriminator, with R1 every r1_interval steps scaled by the interval.
    const Var<float> fake(out_img.value());
    const Var<float> real_logits = n.critic(Var<float>(b.gt), b.mask);
    const Var<float> fake_logits = n.critic(fake, b.mask);
    Var<float> r1;
    if (step_ % cfg_.r1_interval == 0 && cfg_.loss.gamma > 0) {
      const Tensor<float> mask = b.mask;
      const auto critic = [&n, mask](const Var<float>& x) { return n.critic(x, mask); };
      r1 = scale(r1_penalty<float>(critic, b.gt, static_cast<float>(cfg_.loss.gamma)),
                 static_cast<float>(cfg_.r1_interval));
      out.r1 = r1.item();
      out.r1_applied = true;
    }
    const Var<float> loss_d = adv_loss_d(real_logits, fake_logits, r1);
    out.adv_d = loss_d.item() - out.r1;
    check_finite(out, "discriminator");
    opt_d_.step(grad(loss_d, opt_d_.vars()));
    ++step_;
    return out;
  }

  /// Runs until `until_step`, logging and checkpointing into run.out_dir
  /// when it is non-empty.
  void train(std::int64_t until_step, const std::function<void(const StepLosses&)>& on_step = {}) {
    std::ofstream log;
    if (!cfg_.out_dir.empty()) {
      std::filesystem::create_directories(cfg_.out_dir);
      truncate_log_after(step_);
      log.open(log_path(), std::ios::app);
      if (!log) throw IoError("cannot open loss log " + log_path().string());
    }
    while (step_ < until_step) {
      StepLosses s;
      try {
        s = step();
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step_ + 1) + ": " + e.what());
      }
      if (log.is_open() && s.step % cfg_.log_every == 0) {
        for (const auto& [name, value] : s.terms()) {
          nlohmann::json rec{{"step", s.step}, {"loss", name}, {"value", value}};
          if (name == "r1") rec["applied"] = s.r1_applied;
          log << rec.dump() << '\n';
        }
        log.flush();
      }
      if (on_step) on_step(s);
      if (!cfg_.out_dir.empty() && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0)
        save_latest();
    }
    if (!cfg_.out_dir.empty()) save_latest();
  }

  CheckpointFile checkpoint() const {
    CheckpointFile ck;
    ck.meta["format"] = "facefill-checkpoint";
    ck.meta["step"] = step_;
    ck.meta["config"] = config_to_text(cfg_);
    ck.meta["rng"] = rng_.state();
    ck.meta["data_order"] = sampler_.order();
    ck.meta["data_position"] = sampler_.position();
    ck.meta["opt_g_steps"] = opt_g_.steps();
    ck.meta["opt_d_steps"] = opt_d_.steps();
    ck.meta["frozen_hashes"] = frozen_;
    ck.meta["stand_ins"] = {{"E", pretrain_.encoder},
                            {"R", pretrain_.identity},
                            {"F", "frozen random convolutional pyramid"}};
    for (auto& [set, ps] : nets_->sets())
      for (const auto& [name, v] : ps->items()) ck.put(set + "/" + name, v.value());
    ck.put("f/w_avg", nets_->f.w_avg());
    auto put_adam = [&ck](const Adam<float>& opt, const std::string& prefix) {
      auto& o = const_cast<Adam<float>&>(opt);
      for (std::size_t i = 0; i < o.params().size(); ++i) {
        ck.put(prefix + "/m/" + o.params()[i].first, o.first_moments()[i]);
        ck.put(prefix + "/v/" + o.params()[i].first, o.second_moments()[i]);
      }
    };
    put_adam(opt_g_, "opt_g");
    put_adam(opt_d_, "opt_d");
    return ck;
  }

  void save_latest() const { checkpoint().save(latest_path()); }
  std::filesystem::path latest_path() const { return std::filesystem::path(cfg_.out_dir) / "latest.ffck"; }
  std::filesystem::path log_path() const { return std::filesystem::path(cfg_.out_dir) / "losses.ndjson"; }

  std::map<std::string, std::string> frozen_hashes() const {
    return {{"E", nets_->E.params().hash()}, {"R", nets_->R.params().hash()}, {"F", nets_->F.params().hash()}};
  }
  std::map<std::string, std::string> all_hashes() const {
    std::map<std::string, std::string> h;
    for (auto& [set, ps] : nets_->sets()) h[set] = ps->hash();
    return h;
  }
  const std::map<std::string, std::string>& recorded_frozen_hashes() const { return frozen_; }

  std::int64_t step_count() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& mutable_config() { return cfg_; }
  Networks& nets() { return *nets_; }
  const Networks& nets() const { return *nets_; }
  const Dataset& data() const { return data_; }
  const PretrainReport& pretrain_report() const { return pretrain_; }

  /// Copies parameter values and w_avg from a checkpoint into `nets`.
  static void restore_params(Networks& nets, const CheckpointFile& ck) {
    for (auto& [set, ps] : nets.sets())
      for (const auto& [name, v] : ps->items()) {
        const Tensor<float>& t = ck.get(set + "/" + name);
        if (t.shape() != v.shape()) throw IoError("shape mismatch for " + set + "/" + name);
        const_cast<Var<float>&>(v).mutable_value() = t;
      }
    nets.f.w_avg() = ck.get("f/w_avg");
  }

 private:
  /// Temporarily stops gradient tracking for a parameter set.
  class RequiresGradOff {
   public:
    explicit RequiresGradOff(const ParamSet<float>& ps) : vars_(ps.vars()) {
      for (auto& v : vars_) {
        was_.push_back(v.requires_grad());
        v.set_requires_grad(false);
      }
    }
    ~RequiresGradOff() {
      for (std::size_t i = 0; i < vars_.size(); ++i) vars_[i].set_requires_grad(was_[i]);
    }

   private:
    std::vector<Var<float>> vars_;
    std::vector<bool> was_;
  };

  void make_optimizers() {
    opt_g_ = Adam<float>(join_params<float>(nets_->G.params(), nets_->f.params()), cfg_.adam);
    opt_d_ = Adam<float>(nets_->D.params().items(), cfg_.adam);
  }

  static void restore_adam(Adam<float>& opt, const std::string& prefix, const CheckpointFile& ck) {
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
      opt.first_moments()[i] = ck.get(prefix + "/m/" + opt.params()[i].first);
      opt.second_moments()[i] = ck.get(prefix + "/v/" + opt.params()[i].first);
    }
  }

  void check_finite(const StepLosses& s, const char* phase) const {
    for (const auto& [name, v] : s.terms()) {
      if (std::isfinite(v)) continue;
      if (!cfg_.out_dir.empty()) {
        const auto snap = std::filesystem::path(cfg_.out_dir) / ("diagnostic_step" + std::to_string(step_) + ".ffck");
        checkpoint().save(snap);
        throw NumericError(std::string("non-finite ") + name + " in " + phase + " update; snapshot at " +
                           snap.string());
      }
      throw NumericError(std::string("non-finite ") + name + " in " + phase + " update");
    }
  }

  /// Drops log records beyond `step` so a resumed run does not duplicate.
  void truncate_log_after(std::int64_t step) const {
    if (!std::filesystem::exists(log_path())) return;
    std::ifstream in(log_path());
    std::vector<std::string> keep;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("step").get<std::int64_t>() <= step) keep.push_back(line);
    }
    in.close();
    std::ofstream out(log_path(), std::ios::trunc);
    for (const auto& l : keep) out << l << '\n';
  }

  TrainConfig cfg_;
  Dataset data_;
  std::unique_ptr<Networks> nets_;
  Adam<float> opt_g_, opt_d_;
  Rng rng_;
  EpochSampler sampler_;
  std::int64_t step_ = 0;
  PretrainReport pretrain_;
  std::map<std::string, std::string> frozen_;
};

/// Networks and config from a checkpoint, for inference and evaluation.
inline std::pair<TrainConfig, std::unique_ptr<Networks>> load_networks(const CheckpointFile& ck) {
  TrainConfig cfg = parse_config(ck.meta.at("config").get<std::string>());
  auto nets = std::make_unique<Networks>(cfg.model, derive_seed(cfg.seed, kInitStream));
  Trainer::restore_params(*nets, ck);
  nets->freeze_stand_ins();
  return {cfg, std::move(nets)};
}

}  // namespace facefill
