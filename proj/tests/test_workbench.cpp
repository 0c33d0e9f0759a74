// Copyright 2026 The naptune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "naptune/checkpoint.hpp"
#include "naptune/config.hpp"
#include "naptune/errors.hpp"
#include "naptune/eval.hpp"
#include "naptune/fingerprint.hpp"
#include "naptune/metrics.hpp"
#include "naptune/workbench.hpp"
#include "test_util.hpp"

namespace naptune {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("naptune-test-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- configuration ---------------------------------------------------------

TEST(ConfigTest, DefaultsAndBuilders) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.count("classes"), 8u);
  EXPECT_EQ(cfg.count("shots"), 16u);
  EXPECT_EQ(cfg.text("mode"), "nap");
  EXPECT_EQ(cfg.model_config().image.depth, 12u);
  EXPECT_EQ(cfg.model_config().image.patch_size, 8u);
  const TrainConfig t = cfg.train_config();
  EXPECT_EQ(t.epochs, 90u);
  EXPECT_FLOAT_EQ(t.attack.epsilon, 1.0f / 255.0f);
  EXPECT_EQ(t.attack.steps, 5u);
  const auto attacks = cfg.eval_attacks();
  ASSERT_EQ(attacks.size(), 1u);
  EXPECT_EQ(attacks[0].steps, 100u);
  EXPECT_EQ(cfg.defense_config().mode, DefenseMode::nap);
}

TEST(ConfigTest, ParseCommentsAndNormalise) {
  const RunConfig a = RunConfig::parse("# header\nlr = 0.00050  # trailing\n\nmode=advpt_vli\neval_eps = 1, 2,4\n");
  EXPECT_EQ(a.raw("lr"), "0.0005");
  EXPECT_EQ(a.text("mode"), "advpt_vli");
  EXPECT_EQ(a.real_list("eval_eps"), (std::vector<double>{1, 2, 4}));
  EXPECT_EQ(a.eval_attacks().size(), 3u);
  EXPECT_TRUE(RunConfig::parse(a.to_text()) == a);
  RunConfig b;
  b.set_assignment("lr=5e-4");
  b.set("mode", "advpt_vli");
  b.set("eval_eps", "1,2,4");
  EXPECT_TRUE(a == b);
}

TEST(ConfigTest, RejectsBadInput) {
  RunConfig cfg;
  EXPECT_THROW(cfg.set("learning_rate", "1"), ConfigError);
  EXPECT_THROW(cfg.set("epochs", "ten"), ConfigError);
  EXPECT_THROW(cfg.set("epochs", "-3"), ConfigError);
  EXPECT_THROW(cfg.set("train_random_start", "maybe"), ConfigError);
  EXPECT_THROW(cfg.set("lr", "nan"), ConfigError);
  EXPECT_THROW(cfg.set_assignment("no-equals-sign"), ConfigError);
  EXPECT_THROW(RunConfig::parse("just words\n"), ConfigError);
  EXPECT_THROW(RunConfig::load("/nonexistent/naptune.cfg"), ConfigError);
  EXPECT_THROW(cfg.real("epochs"), ConfigError);
}

TEST(ConfigTest, CanonicalSubset) {
  RunConfig cfg;
  cfg.set("lr", "0.01");
  EXPECT_EQ(cfg.canonical({"lr", "epochs"}), "lr=0.01\nepochs=90\n");
}

// --- dataset -----------------------------------------------------------------

SyntheticSpec small_spec(std::uint64_t seed = 7) {
  SyntheticSpec s;
  s.per_class = 20;
  s.test_per_class = 5;
  s.adapt_per_class = 4;
  s.seed = seed;
  return s;
}

TEST(DatasetTest, DeterministicAndDisjointStreams) {
  const SyntheticSplits a = gen_synthetic(small_spec());
  const SyntheticSplits b = gen_synthetic(small_spec());
  const SyntheticSplits c = gen_synthetic(small_spec(8));
  EXPECT_TRUE(a.train == b.train);
  EXPECT_TRUE(a.test == b.test);
  EXPECT_TRUE(a.adapt == b.adapt);
  EXPECT_FALSE(a.train == c.train);
  EXPECT_EQ(a.train.size(), 160u);
  EXPECT_EQ(a.test.size(), 40u);
  EXPECT_EQ(a.adapt.size(), 32u);
  // Different streams: no test image appears verbatim in the training split.
  const std::size_t n = a.train.image_numel();
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    for (std::size_t j = 0; j < a.train.size(); ++j) {
      ASSERT_FALSE(std::equal(a.test.pixels.begin() + i * n, a.test.pixels.begin() + (i + 1) * n,
                              a.train.pixels.begin() + j * n));
    }
  }
}

TEST(DatasetTest, NamesRangeAndBalance) {
  const Dataset d = gen_synthetic(small_spec()).train;
  ASSERT_EQ(d.class_names.size(), 8u);
  EXPECT_EQ(d.class_names[0], "red-circle");
  for (float v : d.pixels) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  std::vector<int> counts(8, 0);
  for (std::size_t i = 0; i < 16; ++i) ++counts[d.labels[i]];
  for (int c : counts) EXPECT_EQ(c, 2);
}

TEST(DatasetTest, SpecErrors) {
  SyntheticSpec s = small_spec();
  s.classes = 65;
  EXPECT_THROW(gen_synthetic(s), ConfigError);
  s = small_spec();
  s.contrast = 0.0f;
  EXPECT_THROW(gen_synthetic(s), ConfigError);
  s = small_spec();
  s.image_size = 4;
  EXPECT_THROW(gen_synthetic(s), ConfigError);
}

TEST(DatasetTest, BinaryRoundTripAndCorruption) {
  const Dataset d = gen_synthetic(small_spec()).test;
  const auto bytes = encode_dataset(d);
  EXPECT_TRUE(decode_dataset(bytes) == d);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_dataset(bad), FormatError);
  EXPECT_THROW(decode_dataset(std::span(bytes).first(bytes.size() - 1)), FormatError);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_dataset(longer), FormatError);
  const fs::path dir = scratch_dir("napd");
  save_dataset(d, dir / "x.napd");
  EXPECT_TRUE(load_dataset(dir / "x.napd") == d);
  EXPECT_THROW(load_dataset(dir / "missing.napd"), std::exception);
  fs::remove_all(dir);
}

TEST(DatasetTest, FewShotAndSplit) {
  const SyntheticSplits s = gen_synthetic(small_spec());
  const Dataset shots = sample_shots(s.train, 16, 3);
  EXPECT_EQ(shots.size(), 128u);
  std::vector<int> counts(8, 0);
  for (int y : shots.labels) ++counts[y];
  for (int c : counts) EXPECT_EQ(c, 16);
  EXPECT_TRUE(sample_shots(s.train, 16, 3) == shots);
  EXPECT_THROW(sample_shots(s.adapt, 5, 3), ConfigError);
  const TrainValSplit split = stratified_split(shots, 0.2, 1);
  EXPECT_EQ(split.val.size(), 24u);  // floor(0.2 * 16) = 3 per class
  EXPECT_EQ(split.train.size(), 104u);
}

// Ridge-regression probe on raw pixels, solved in kernel form: the classes
// are linearly learnable from the training split.
TEST(DatasetTest, LinearProbeOnRawPixels) {
  SyntheticSpec spec;
  spec.test_per_class = 1;
  spec.adapt_per_class = 1;
  const Dataset d = gen_synthetic(spec).train;
  const auto n = static_cast<Eigen::Index>(d.size());
  const auto f = static_cast<Eigen::Index>(d.image_numel());
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::MatrixXf>(d.pixels.data(), f, n).transpose().cast<double>();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, 8);
  for (Eigen::Index i = 0; i < n; ++i) y(i, d.labels[static_cast<std::size_t>(i)]) = 1.0;
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd k = centred * centred.transpose();
  const double lambda = k.trace() / static_cast<double>(n);
  const Eigen::MatrixXd scores = k * (k + lambda * Eigen::MatrixXd::Identity(n, n)).ldlt().solve(y);
  std::size_t ok = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index cls;
    scores.row(i).maxCoeff(&cls);
    ok += cls == d.labels[static_cast<std::size_t>(i)];
  }
  const double acc = static_cast<double>(ok) / static_cast<double>(n);
  EXPECT_GE(acc, 0.6);
  EXPECT_LT(acc, 1.0);
}

// --- fingerprints, checkpoints, metrics ---------------------------------------

TEST(FingerprintTest, KnownDigestAndHex) {
  const Fingerprint fp = fingerprint_of("abc");
  EXPECT_EQ(to_hex(fp), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(fingerprint_from_hex(to_hex(fp)), fp);
  EXPECT_THROW(fingerprint_from_hex("zz"), FormatError);
}

TEST(CheckpointTest, RoundTripAndMismatch) {
  Rng rng(3);
  Checkpoint ck;
  ck.fingerprint = fingerprint_of("cfg");
  ck.params = {{"backbone.w", normal_tensor({3, 4}, 1.0f, rng)}, {"defense.p", normal_tensor({2}, 1.0f, rng)}};
  const auto bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.fingerprint, ck.fingerprint);
  EXPECT_TRUE(bit_equal(back.params, ck.params));
  ASSERT_EQ(back.with_prefix("defense.").size(), 1u);
  EXPECT_EQ(back.with_prefix("defense.")[0].name, "p");
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 3)), CheckpointError);

  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint(dir / "a.napc", ck);
  EXPECT_NO_THROW(load_checkpoint(dir / "a.napc", ck.fingerprint));
  EXPECT_THROW(load_checkpoint(dir / "a.napc", fingerprint_of("other")), CheckpointError);
  EXPECT_NO_THROW(load_checkpoint(dir / "a.napc", fingerprint_of("other"), true));
  Checkpoint dup = ck;
  dup.params.push_back(dup.params[0]);
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(dup)), CheckpointError);
  fs::remove_all(dir);
}

TEST(MetricsTest, JsonlRoundTrip) {
  MetricsRecord a;
  a.run_id = "r";
  a.epoch = 3;
  a.alpha = 0.123456789012345;
  a.loss = 1.5;
  a.wall_seconds = 9.0;
  MetricsRecord b = a;
  b.epoch = 4;
  const auto back = parse_jsonl(to_jsonl({a, b}));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].alpha, a.alpha);
  EXPECT_EQ(back[1].epoch, 4u);
  EXPECT_EQ(without_wall_clock(back)[0].wall_seconds, 0.0);
  EXPECT_THROW(parse_jsonl("{not json}\n"), FormatError);
}

// --- workbench ----------------------------------------------------------------

TEST(WorkbenchTest, FingerprintScopes) {
  RunConfig base;
  const Workbench w0(base);
  RunConfig lr = base;
  lr.set("lr", "0.002");
  const Workbench w1(lr);
  EXPECT_EQ(w0.backbone_fingerprint(), w1.backbone_fingerprint());
  EXPECT_NE(w0.defense_fingerprint(), w1.defense_fingerprint());
  RunConfig deep = base;
  deep.set("depth", "6");
  EXPECT_NE(Workbench(deep).backbone_fingerprint(), w0.backbone_fingerprint());
  EXPECT_EQ(Workbench(deep).data_fingerprint(), w0.data_fingerprint());
  RunConfig out = base;
  out.set("out_dir", "elsewhere");
  EXPECT_EQ(Workbench(out).defense_fingerprint(), w0.defense_fingerprint());
}

TEST(WorkbenchTest, NapWithoutRefinersSharesVliIdentity) {
  RunConfig nap0;
  nap0.set("refiner_depth", "0");
  RunConfig vli;
  vli.set("mode", "advpt_vli");
  EXPECT_EQ(describe_defense(nap0.defense_config()), describe_defense(vli.defense_config()));
  EXPECT_EQ(Workbench(nap0).defense_fingerprint(), Workbench(vli).defense_fingerprint());
  EXPECT_NE(describe_defense(RunConfig().defense_config()), describe_defense(vli.defense_config()));
}

TEST(WorkbenchTest, DataCacheRegeneratesWhenStale) {
  const fs::path dir = scratch_dir("data");
  RunConfig cfg;
  cfg.set("data_dir", dir.string());
  cfg.set("per_class", "2");
  cfg.set("test_per_class", "1");
  cfg.set("adapt_per_class", "1");
  const DataBundle a = Workbench(cfg).load_data();
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(Workbench(cfg).load_data().train == a.train);
  cfg.set("per_class", "3");
  EXPECT_EQ(Workbench(cfg).load_data().train.size(), 24u);
  fs::remove_all(dir);
}

// --- command line ---------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NAPTUNE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, ExitCodesAndOutputs) {
  const fs::path dir = scratch_dir("cli");
  const fs::path cfg = dir / "tiny.cfg";
  std::ofstream(cfg) << "per_class = 4\ntest_per_class = 2\nadapt_per_class = 2\nimage_size = 16\n"
                        "depth = 1\nwidth = 16\nheads = 2\nembed_dim = 8\npretrain_epochs = 1\nshots = 2\n"
                        "data_dir = " << (dir / "data").string() << "\ncache_dir = " << (dir / "cache").string()
                     << "\nout_dir = " << (dir / "runs").string() << "\n";
  const std::string base = " --config " + cfg.string();
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("gen-data --bogus"), 1);
  EXPECT_EQ(run_cli("gen-data" + base + " --set bogus=1"), 1);
  EXPECT_EQ(run_cli("gen-data" + base), 0);
  EXPECT_TRUE(fs::exists(dir / "data" / "train.napd"));
  EXPECT_EQ(run_cli("pretrain" + base), 0);
  const Workbench wb(RunConfig::load(cfg));
  EXPECT_TRUE(fs::exists(wb.backbone_path()));
  EXPECT_EQ(run_cli("inspect-ckpt" + base + " --set ckpt=" + wb.backbone_path().string()), 0);
  EXPECT_EQ(run_cli("inspect-ckpt" + base), 1);
  EXPECT_EQ(run_cli("inspect-ckpt" + base + " --set ckpt=" + (dir / "nope.napc").string()), 2);
  // A backbone checkpoint does not carry this run's defense fingerprint.
  const std::string quick = " --set mode=vanilla --set eval_steps=1";
  EXPECT_EQ(run_cli("eval" + base + quick + " --set ckpt=" + wb.backbone_path().string()), 2);
  EXPECT_EQ(run_cli("eval" + base + quick), 0);
  bool have_report = false;
  for (const auto& e : fs::directory_iterator(dir / "runs")) {
    if (e.path().filename().string().starts_with("eval-")) {
      have_report = have_report || (fs::exists(e.path() / "report.json") && fs::exists(e.path() / "config.resolved") &&
                    fs::exists(e.path() / "metrics.jsonl") && fs::exists(e.path() / "log.txt"));
    }
  }
  EXPECT_TRUE(have_report);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace naptune
