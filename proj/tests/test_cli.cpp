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

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "facefill/checkpoint.hpp"
#include "facefill/image_io.hpp"
#include "facefill/masks.hpp"

namespace facefill {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(FACEFILL_CLI) + " " + args + " 2>&1";
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("facefill_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.cfg") << "# 16x16 smoke model\n"
                                        "model.resolution = 16\n"
                                        "model.channels = 16,12,8\n"
                                        "model.style_dim = 24\n"
                                        "model.mapping_layers = 2\n"
                                        "model.encoder_channels = 8,8,8\n"
                                        "model.identity_channels = 8,8\n"
                                        "model.identity_dim = 12\n"
                                        "model.perceptual_channels = 6,8\n"
                                        "train.batch_size = 4\n"
                                        "train.total_steps = 10\n"
                                        "train.r1_interval = 4\n"
                                        "data.toy_identities = 4\n"
                                        "data.toy_per_identity = 4\n"
                                        "data.holdout = 6\n"
                                        "pretrain.identity_steps = 2\n"
                                        "pretrain.encoder_steps = 2\n"
                                        "pretrain.batch = 4\n"
                                        "run.checkpoint_every = 5\n";
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string cfg() { return (dir_ / "tiny.cfg").string(); }
  static std::string path(const std::string& p) { return (dir_ / p).string(); }

  /// Trains the shared smoke model once.
  static std::string trained_checkpoint() {
    static const std::string ck = [] {
      const RunResult r = run_cli("train -c " + cfg() + " --run.out_dir " + path("shared"));
      EXPECT_EQ(r.code, 0) << r.output;
      return path("shared/latest.ffck");
    }();
    return ck;
  }

  /// The smoke model at initialization; its outputs are not yet saturated,
  /// so seed changes stay visible after byte quantization.
  static std::string initial_checkpoint() {
    static const std::string ck = [] {
      const RunResult r = run_cli("train -c " + cfg() + " --run.out_dir " + path("init") + " --train.total_steps 0");
      EXPECT_EQ(r.code, 0) << r.output;
      return path("init/latest.ffck");
    }();
    return ck;
  }

  static inline fs::path dir_;
};

TEST_F(Cli, MissingConfigIsUsageError) {
  RunResult r = run_cli("train");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("Usage"), std::string::npos) << r.output;
  r = run_cli("train -c " + path("does_not_exist.cfg"));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("--help").code, 0);
}

TEST_F(Cli, ConfigErrorsExitThree) {
  std::ofstream(path("bad.cfg")) << "train.nonsense = 1\n";
  EXPECT_EQ(run_cli("train -c " + path("bad.cfg")).code, 3);
  EXPECT_EQ(run_cli("train -c " + cfg() + " --train.tau 2").code, 3);
}

TEST_F(Cli, TrainSmokeWritesCheckpointAndTenLoggedSteps) {
  const std::string ck = trained_checkpoint();
  ASSERT_TRUE(fs::exists(ck));
  EXPECT_EQ(CheckpointFile::load(ck).meta.at("step"), 10);
  std::ifstream log(path("shared/losses.ndjson"));
  std::set<std::int64_t> steps;
  std::string line;
  int records = 0;
  while (std::getline(log, line)) {
    steps.insert(nlohmann::json::parse(line).at("step").get<std::int64_t>());
    ++records;
  }
  EXPECT_EQ(steps.size(), 10u);
  EXPECT_EQ(records, 70);
}

TEST_F(Cli, ResumeContinuesToSameResult) {
  const std::string out = path("resume");
  RunResult r = run_cli("train -c " + cfg() + " --run.out_dir " + out + " --train.total_steps 5");
  ASSERT_EQ(r.code, 0) << r.output;
  r = run_cli("train -c " + cfg() + " --run.out_dir " + out + " --resume");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("resumed from"), std::string::npos);
  const std::string full = path("full");
  ASSERT_EQ(run_cli("train -c " + cfg() + " --run.out_dir " + full).code, 0);
  // Same run state; the config snapshot differs only in run.out_dir.
  const CheckpointFile a = CheckpointFile::load(out + "/latest.ffck");
  const CheckpointFile b = CheckpointFile::load(full + "/latest.ffck");
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    ASSERT_EQ(a.tensors[i].first, b.tensors[i].first);
    for (std::int64_t k = 0; k < a.tensors[i].second.numel(); ++k)
      ASSERT_EQ(a.tensors[i].second[k], b.tensors[i].second[k]) << a.tensors[i].first;
  }
  EXPECT_EQ(a.meta.at("rng"), b.meta.at("rng"));
  EXPECT_EQ(a.meta.at("step"), 10);
}

TEST_F(Cli, InferEmptyMaskSameFlagsAndSeedDiffs) {
  const std::string ck = initial_checkpoint();
  ASSERT_EQ(run_cli("make-toyset --identities 2 --per-identity 1 --resolution 16 -o " + path("faces")).code, 0);
  write_png(path("empty.png"), mask_to_image(BinaryMask(16, 16)));
  write_png(path("hole.png"), mask_to_image(center_mask(16, 16, 0.5)));
  const std::string base = "infer --checkpoint " + ck + " --input " + path("faces/face_00000.png") +
                           " --exemplar " + path("faces/face_00001.png");
  ASSERT_EQ(run_cli(base + " --mask " + path("empty.png") + " -o " + path("o_empty.png")).code, 0);
  EXPECT_EQ(read_png(path("o_empty.png")).data, read_png(path("faces/face_00000.png")).data);

  ASSERT_EQ(run_cli(base + " --mask " + path("hole.png") + " --seed 1 -o " + path("a.png")).code, 0);
  ASSERT_EQ(run_cli(base + " --mask " + path("hole.png") + " --seed 1 -o " + path("b.png")).code, 0);
  ASSERT_EQ(run_cli(base + " --mask " + path("hole.png") + " --seed 2 -o " + path("c.png")).code, 0);
  EXPECT_EQ(read_file(path("a.png")), read_file(path("b.png")));
  const Image a = read_png(path("a.png")), c = read_png(path("c.png"));
  const BinaryMask m = center_mask(16, 16, 0.5);
  bool differs_inside = false;
  for (std::int64_t y = 0; y < 16; ++y)
    for (std::int64_t x = 0; x < 16; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        if (!m.at(y, x)) EXPECT_EQ(a.at(y, x, ch), c.at(y, x, ch));
        else if (a.at(y, x, ch) != c.at(y, x, ch)) differs_inside = true;
      }
  EXPECT_TRUE(differs_inside);

  const RunResult mix = run_cli(base + " --mask " + path("hole.png") + " --exemplar2 " +
                                path("faces/face_00000.png") + " --crossover 1 6 -o " + path("m.png"));
  EXPECT_EQ(mix.code, 0) << mix.output;
}

TEST_F(Cli, InferRuntimeErrorsExitFour) {
  const std::string ck = trained_checkpoint();
  ASSERT_EQ(run_cli("make-toyset --identities 1 --per-identity 1 --resolution 32 -o " + path("big")).code, 0);
  write_png(path("hole16.png"), mask_to_image(center_mask(16, 16, 0.5)));
  const RunResult r = run_cli("infer --checkpoint " + ck + " --input " + path("big/face_00000.png") + " --mask " +
                              path("hole16.png") + " --exemplar " + path("big/face_00000.png") + " -o " +
                              path("x.png"));
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("32x32"), std::string::npos) << r.output;
}

TEST_F(Cli, MaskGenAndEvaluate) {
  ASSERT_EQ(run_cli("mask-gen --resolution 32 --count 3 --seed 4 -o " + path("masks")).code, 0);
  EXPECT_TRUE(fs::exists(path("masks/mask_00002.png")));
  EXPECT_EQ(read_png(path("masks/mask_00000.png"), 1).h, 32);
  const RunResult r = run_cli("evaluate --checkpoint " + trained_checkpoint() + " --samples 4 -o " + path("r.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  std::ifstream in(path("r.json"));
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("bins").size(), 7u);
  EXPECT_EQ(j.at("bins").back().at("name"), "center");
  EXPECT_FALSE(j.at("extractor_hash").get<std::string>().empty());
  EXPECT_EQ(run_cli("evaluate --checkpoint " + trained_checkpoint() + " --samples 4 --initial -o " +
                    path("r0.json")).code, 0);
}

}  // namespace
}  // namespace facefill
