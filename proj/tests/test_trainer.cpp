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

#include <cmath>

#include "naptune/errors.hpp"
#include "naptune/ops.hpp"
#include "naptune/optim.hpp"
#include "naptune/trainer.hpp"
#include "test_util.hpp"

namespace naptune {
namespace {

using testing::random_images;
using testing::tiny_model_config;

TEST(AlphaScheduleTest, MidpointAndEndpoints) {
  for (double a0 : {1.0, 5.0}) {
    EXPECT_NEAR(alpha_schedule(45, 90, a0), a0 / 2.0, 1e-7);
    EXPECT_NEAR(alpha_schedule(0, 90, a0), 0.0066929 * a0, 1e-6);
    EXPECT_NEAR(alpha_schedule(90, 90, a0), 0.9933071 * a0, 1e-6);
  }
  // Closed form 1 / (1 + e^5).
  EXPECT_NEAR(alpha_schedule(0, 90, 1.0), 0.0066928509242848554, 1e-15);
  EXPECT_THROW(alpha_schedule(0, 0, 5.0), ConfigError);
  EXPECT_THROW(alpha_schedule(91, 90, 5.0), ConfigError);
}

TEST(AlphaScheduleTest, StrictlyIncreasing) {
  for (int t = 1; t <= 90; ++t) EXPECT_GT(alpha_schedule(t, 90, 5.0), alpha_schedule(t - 1, 90, 5.0));
}

TEST(CosineLrTest, Landmarks) {
  EXPECT_FLOAT_EQ(cosine_lr(0, 100, 0.1f), 0.1f);
  EXPECT_FLOAT_EQ(cosine_lr(50, 100, 0.1f), 0.05f);
  EXPECT_FLOAT_EQ(cosine_lr(100, 100, 0.1f), 0.0f);
  EXPECT_GE(cosine_lr(200, 100, 0.1f), 0.0f);
}

TEST(AdamWTest, ZeroGradientCases) {
  Tensor w({2}, {1.0f, -2.0f}, true);
  ParamList p = {{"w", w}};
  OptimizerState s = make_optimizer_state(p);
  AdamWConfig no_decay;
  no_decay.weight_decay = 0.0f;
  adamw_step(p, s, 0.1f, no_decay);
  EXPECT_EQ(w.at(0), 1.0f);
  EXPECT_EQ(w.at(1), -2.0f);
  AdamWConfig decay;
  decay.weight_decay = 0.5f;
  adamw_step(p, s, 0.1f, decay);
  EXPECT_FLOAT_EQ(w.at(0), 0.95f);
  EXPECT_FLOAT_EQ(w.at(1), -1.9f);
}

TEST(AdamWTest, ThreeStepScalarTrajectory) {
  // Reference trajectory computed by hand in double precision.
  const double expected[3] = {0.899000002, 0.8635404181145108, 0.824737700415581};
  const float grads[3] = {0.5f, -0.2f, 0.1f};
  Tensor w({1}, {1.0f}, true);
  ParamList p = {{"w", w}};
  OptimizerState s = make_optimizer_state(p);
  AdamWConfig cfg;
  cfg.weight_decay = 0.01f;
  for (int t = 0; t < 3; ++t) {
    w.grad_buffer()[0] = grads[t];
    adamw_step(p, s, 0.1f, cfg);
    EXPECT_NEAR(w.at(0), expected[t], 1e-6) << "step " << t + 1;
  }
}

Dataset tiny_dataset(std::size_t per_class, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.per_class = per_class;
  spec.test_per_class = 1;
  spec.image_size = 16;
  spec.seed = seed;
  return gen_synthetic(spec).train;
}

class TrainerTest : public ::testing::Test {
 protected:
  TrainerTest() : data_(tiny_dataset(5, 1)), model_(tiny_model_config(), data_.class_names, 2) {
    model_.set_frozen(true);
    cfg_.epochs = 4;
    cfg_.batch_size = 8;
    cfg_.lr = 1e-2f;
    cfg_.attack.steps = 2;
    cfg_.attack.epsilon = 4.0f / 255.0f;
    cfg_.seed = 3;
  }

  Defense nap() const { return Defense::create({DefenseMode::nap, 2, 2, {2, 2}}, model_.config(), 4); }

  Dataset data_;
  DualEncoderModel model_;
  TrainConfig cfg_;
  std::vector<int> labels_ = {0, 1, 2};
};

TEST_F(TrainerTest, CombinedLossReductions) {
  const Defense d = nap();
  const Tensor x = random_images(3, 16, 5);
  {
    Tape tape;
    const CombinedLoss l = combined_loss(tape, model_, d, x, labels_, 0.0, cfg_.attack, 1);
    EXPECT_EQ(l.loss.item(), static_cast<float>(l.clean_ce));
  }
  {
    AttackConfig none = cfg_.attack;
    none.epsilon = 0.0f;
    Tape tape;
    const CombinedLoss l = combined_loss(tape, model_, d, x, labels_, 2.0, none, 1);
    EXPECT_EQ(l.adv_ce, l.clean_ce);
    EXPECT_NEAR(l.loss.item(), 3.0 * l.clean_ce, 1e-5);
    EXPECT_GE(l.loss.item(), 0.0f);
  }
}

TEST_F(TrainerTest, GradientsReachOnlyTheDefense) {
  const Defense d = nap();
  Tape tape;
  const CombinedLoss l = combined_loss(tape, model_, d, random_images(3, 16, 6), labels_, 1.0, cfg_.attack, 1);
  tape.backward(l.loss);
  for (const auto& p : model_.parameters()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
  bool any = false;
  for (const auto& p : d.trainable_parameters()) any = any || p.tensor.has_grad();
  EXPECT_TRUE(any);
}

TEST_F(TrainerTest, BackboneFrozenAndCurriculumLogged) {
  const ParamList before = snapshot(model_.parameters());
  const Defense d = nap();
  const ParamList defense_before = snapshot(d.trainable_parameters());
  const TrainResult r = run_training(model_, d, data_, cfg_);
  EXPECT_TRUE(bit_equal(before, model_.parameters()));
  EXPECT_TRUE(bit_equal(defense_before, d.trainable_parameters()));
  EXPECT_FALSE(bit_equal(defense_before, r.final_defense.trainable_parameters()));
  ASSERT_EQ(r.history.size(), 4u);
  for (std::size_t e = 1; e < r.history.size(); ++e) EXPECT_GT(r.history[e].alpha, r.history[e - 1].alpha);
  EXPECT_NEAR(r.history[2].alpha, cfg_.alpha_0 / 2.0, 1e-12);
  for (const auto& m : r.history) {
    EXPECT_NEAR(m.loss, m.clean_ce + m.alpha * m.adv_ce, 1e-5);
    EXPECT_GE(m.clean_val_acc, 0.0);
    EXPECT_LE(m.robust_val_acc, 1.0);
  }
  EXPECT_FALSE(r.validated_on_train);
}

TEST_F(TrainerTest, SeededRunsAreIdentical) {
  const TrainResult a = run_training(model_, nap(), data_, cfg_, "a");
  const TrainResult b = run_training(model_, nap(), data_, cfg_, "a");
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].loss, b.history[e].loss);
    EXPECT_EQ(a.history[e].robust_val_acc, b.history[e].robust_val_acc);
  }
  EXPECT_TRUE(bit_equal(a.final_defense.trainable_parameters(), b.final_defense.trainable_parameters()));
}

TEST_F(TrainerTest, VanillaIsANoOp) {
  const Defense v = Defense::create({DefenseMode::vanilla, 2, 2, {2, 2}}, model_.config(), 4);
  const TrainResult r = run_training(model_, v, data_, cfg_);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].clean_val_acc, r.initial.clean);
  EXPECT_TRUE(r.final_defense.trainable_parameters().empty());
}

TEST_F(TrainerTest, SingleShotValidatesOnTrain) {
  TrainConfig cfg = cfg_;
  cfg.epochs = 1;
  const Dataset one = sample_shots(data_, 1, 5);
  const TrainResult r = run_training(model_, nap(), one, cfg);
  EXPECT_TRUE(r.validated_on_train);
}

TEST_F(TrainerTest, RejectsUnfrozenBackboneAndBadConfig) {
  DualEncoderModel live(tiny_model_config(), data_.class_names, 2);
  EXPECT_THROW(run_training(live, nap(), data_, cfg_), ContractError);
  TrainConfig bad = cfg_;
  bad.epochs = 0;
  EXPECT_THROW(run_training(model_, nap(), data_, bad), ConfigError);
  bad = cfg_;
  bad.alpha_0 = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

}  // namespace
}  // namespace naptune
