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
#include <fstream>
#include <map>
#include <set>

#include "facefill/training.hpp"
#include "small_config.hpp"

namespace facefill {
namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("facefill_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.model = testing::tiny_config();
  c.batch_size = 4;
  c.total_steps = 10;
  c.r1_interval = 4;
  c.toy_identities = 4;
  c.toy_per_identity = 4;
  c.holdout = 4;
  c.pretrain_identity_steps = 3;
  c.pretrain_encoder_steps = 3;
  c.pretrain_batch = 4;
  c.out_dir = "";
  c.seed = 99;
  c.validate();
  return c;
}

Dataset train_split(const TrainConfig& c) { return load_training_data(c).first; }

TEST(AssembleBatch, TauOneAlwaysUsesGroundTruth) {
  TrainConfig c = tiny_train_config();
  c.tau = 1.0;
  c.batch_size = 64;
  const Dataset d = train_split(c);
  Rng rng(1);
  EpochSampler s;
  const Batch b = assemble_batch(d, rng, c, s);
  for (std::size_t i = 0; i < b.same.size(); ++i) {
    EXPECT_TRUE(b.same[i]);
    EXPECT_EQ(b.exemplar_index[i], b.gt_index[i]);
  }
}

TEST(AssembleBatch, TauZeroNeverUsesGroundTruth) {
  TrainConfig c = tiny_train_config();
  c.tau = 0.0;
  c.batch_size = 64;
  const Dataset d = train_split(c);
  Rng rng(2);
  EpochSampler s;
  const Batch b = assemble_batch(d, rng, c, s);
  for (std::size_t i = 0; i < b.same.size(); ++i) EXPECT_NE(b.exemplar_index[i], b.gt_index[i]);
}

TEST(AssembleBatch, SameFlagRateMatchesTau) {
  TrainConfig c = tiny_train_config();
  c.tau = 0.1;
  c.batch_size = 1000;
  const Dataset d = train_split(c);
  Rng rng(3);
  EpochSampler s;
  std::int64_t same = 0, total = 0;
  for (int k = 0; k < 10; ++k) {
    const Batch b = assemble_batch(d, rng, c, s);
    for (bool f : b.same) same += f;
    total += static_cast<std::int64_t>(b.same.size());
  }
  EXPECT_EQ(total, 10000);
  EXPECT_NEAR(static_cast<double>(same) / static_cast<double>(total), 0.10, 0.01);
}

TEST(AssembleBatch, InputIsGroundTruthOutsideHolesAndZeroInside) {
  const TrainConfig c = tiny_train_config();
  const Dataset d = train_split(c);
  Rng rng(4);
  EpochSampler s;
  const Batch b = assemble_batch(d, rng, c, s);
  const std::int64_t hw = 16 * 16;
  for (std::int64_t i = 0; i < b.input.numel(); ++i) {
    const float m = b.mask[(i / (3 * hw)) * hw + i % hw];
    EXPECT_EQ(b.input[i], m != 0.0f ? 0.0f : b.gt[i]);
  }
  for (std::int64_t i = 0; i < b.mask.numel(); ++i)
    EXPECT_NEAR(b.weight[i] + b.reverse_weight[i], b.mask[i], 1e-6);
  EXPECT_EQ(b.z1.shape(), (Shape{4, 24}));
}

TEST(AssembleBatch, EpochSamplerVisitsEveryImageOncePerEpoch) {
  Rng rng(5);
  EpochSampler s;
  std::multiset<std::int64_t> seen;
  for (int i = 0; i < 24; ++i) seen.insert(s.next(12, rng));
  for (std::int64_t i = 0; i < 12; ++i) EXPECT_EQ(seen.count(i), 2u);
}

TEST(Trainer, OneStepUpdatesTrainableAndKeepsFrozen) {
  const TrainConfig c = tiny_train_config();
  Trainer t(c, train_split(c));
  const auto before = t.all_hashes();
  const StepLosses s = t.step();
  const auto after = t.all_hashes();
  for (const char* k : {"G", "f", "D"}) EXPECT_NE(before.at(k), after.at(k)) << k;
  for (const char* k : {"E", "R", "F"}) EXPECT_EQ(before.at(k), after.at(k)) << k;
  EXPECT_EQ(t.frozen_hashes(), t.recorded_frozen_hashes());
  for (const auto& [name, v] : s.terms()) EXPECT_TRUE(std::isfinite(v)) << name;
  EXPECT_TRUE(s.r1_applied);
  EXPECT_EQ(s.step, 1);
}

TEST(Trainer, LazyR1Cadence) {
  const TrainConfig c = tiny_train_config();
  Trainer t(c, train_split(c));
  for (int i = 0; i < 9; ++i) {
    const StepLosses s = t.step();
    EXPECT_EQ(s.r1_applied, (s.step - 1) % 4 == 0) << s.step;
    if (!s.r1_applied) EXPECT_EQ(s.r1, 0.0);
  }
}

TEST(Trainer, IdenticalSeedsGiveIdenticalRuns) {
  const TrainConfig c = tiny_train_config();
  Trainer a(c, train_split(c)), b(c, train_split(c));
  for (int i = 0; i < 10; ++i) {
    const StepLosses la = a.step(), lb = b.step();
    EXPECT_EQ(la.total_g, lb.total_g);
    EXPECT_EQ(la.adv_d, lb.adv_d);
  }
  EXPECT_EQ(a.all_hashes(), b.all_hashes());
  EXPECT_EQ(a.checkpoint().encode(), b.checkpoint().encode());
}

TEST(Trainer, DifferentSeedsDiffer) {
  TrainConfig c = tiny_train_config();
  Trainer a(c, train_split(c));
  c.seed = 100;
  Trainer b(c, train_split(c));
  EXPECT_NE(a.all_hashes().at("G"), b.all_hashes().at("G"));
}

TEST(Trainer, ZeroStepsLeavesTrainableAtInitialization) {
  const TrainConfig c = tiny_train_config();
  Trainer t(c, train_split(c));
  t.train(0);
  EXPECT_EQ(t.step_count(), 0);
  Networks fresh(c.model, derive_seed(c.seed, kInitStream));
  const CheckpointFile ck = t.checkpoint();
  for (auto& [set, ps] : fresh.sets()) {
    if (std::string(set) == "E" || std::string(set) == "R") continue;  // pretrained stand-ins
    for (const auto& [name, v] : ps->items()) {
      const Tensor<float>& saved = ck.get(set + "/" + name);
      for (std::int64_t i = 0; i < saved.numel(); ++i) ASSERT_EQ(saved[i], v.value()[i]) << set << "/" << name;
    }
  }
}

TEST(Trainer, ResumeReproducesUninterruptedRun) {
  const TrainConfig c = tiny_train_config();
  Trainer full(c, train_split(c));
  for (int i = 0; i < 6; ++i) full.step();

  Trainer first(c, train_split(c));
  for (int i = 0; i < 3; ++i) first.step();
  const auto bytes = first.checkpoint().encode();
  Trainer resumed(CheckpointFile::decode(bytes), train_split(c));
  EXPECT_EQ(resumed.step_count(), 3);
  for (int i = 0; i < 3; ++i) resumed.step();
  EXPECT_EQ(resumed.all_hashes(), full.all_hashes());
  EXPECT_EQ(resumed.checkpoint().encode(), full.checkpoint().encode());
}

TEST(Trainer, CheckpointSaveLoadSaveIsByteIdentical) {
  const auto dir = temp_dir("ckpt");
  const TrainConfig c = tiny_train_config();
  Trainer t(c, train_split(c));
  t.step();
  t.checkpoint().save(dir / "a.ffck");
  const CheckpointFile loaded = CheckpointFile::load(dir / "a.ffck");
  loaded.save(dir / "b.ffck");
  EXPECT_EQ(read_file(dir / "a.ffck"), read_file(dir / "b.ffck"));
  Trainer resumed(loaded, train_split(c));
  resumed.checkpoint().save(dir / "c.ffck");
  EXPECT_EQ(read_file(dir / "a.ffck"), read_file(dir / "c.ffck"));
  std::filesystem::remove_all(dir);
}

TEST(Trainer, TamperedFrozenNetworkRejectedOnResume) {
  const TrainConfig c = tiny_train_config();
  Trainer t(c, train_split(c));
  CheckpointFile ck = t.checkpoint();
  for (auto& [name, tensor] : ck.tensors)
    if (name.rfind("R/", 0) == 0) {
      tensor[0] += 1.0f;
      break;
    }
  EXPECT_THROW(Trainer(ck, train_split(c)), IoError);
}

TEST(Trainer, CorruptCheckpointBytesRejected) {
  const TrainConfig c = tiny_train_config();
  Trainer t(c, train_split(c));
  auto bytes = t.checkpoint().encode();
  bytes.pop_back();
  EXPECT_THROW(CheckpointFile::decode(bytes), IoError);
  bytes[0] = 'X';
  EXPECT_THROW(CheckpointFile::decode(bytes), IoError);
}

std::map<std::int64_t, std::map<std::string, int>> read_log(const std::filesystem::path& p) {
  std::map<std::int64_t, std::map<std::string, int>> counts;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(std::isfinite(j.at("value").get<double>()));
    ++counts[j.at("step").get<std::int64_t>()][j.at("loss").get<std::string>()];
  }
  return counts;
}

TEST(Trainer, LogHasOneRecordPerTermPerStepAcrossResume) {
  const auto dir = temp_dir("log");
  TrainConfig c = tiny_train_config();
  c.out_dir = dir.string();
  c.checkpoint_every = 2;
  {
    Trainer t(c, train_split(c));
    t.train(3);
  }
  // Latest checkpoint is at step 3 (end of run); pretend the run died after
  // step 2 by resuming from an earlier snapshot with a longer log on disk.
  {
    Trainer t(c, train_split(c));
    t.train(2);
    Trainer again(CheckpointFile::load(t.latest_path()), train_split(c));
    again.train(5);
  }
  const auto counts = read_log(dir / "losses.ndjson");
  ASSERT_EQ(counts.size(), 5u);
  for (const auto& [step, terms] : counts) {
    EXPECT_EQ(terms.size(), 7u) << step;
    for (const auto& [name, n] : terms) EXPECT_EQ(n, 1) << step << " " << name;
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "latest.ffck"));
  EXPECT_EQ(CheckpointFile::load(dir / "latest.ffck").meta.at("step"), 5);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, NonFiniteLossAbortsWithSnapshot) {
  const auto dir = temp_dir("nan");
  TrainConfig c = tiny_train_config();
  c.out_dir = dir.string();
  Trainer t(c, train_split(c));
  const auto& items = t.nets().G.params().items();
  const_cast<Var<float>&>(items.front().second).mutable_value()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.train(1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("snapshot"), std::string::npos);
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "diagnostic_step0.ffck"));
  std::filesystem::remove_all(dir);
}

TEST(Trainer, DeriveSeedSeparatesStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s : {0ULL, 1ULL, 2ULL})
    for (std::uint64_t k : {1ULL, 2ULL, 3ULL, 4ULL}) seen.insert(derive_seed(s, k));
  EXPECT_EQ(seen.size(), 12u);
}

}  // namespace
}  // namespace facefill
