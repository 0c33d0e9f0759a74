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
#include <numeric>

#include "naptune/attack.hpp"
#include "naptune/errors.hpp"
#include "naptune/ops.hpp"
#include "test_util.hpp"

namespace naptune {
namespace {

using testing::random_images;
using testing::tiny_classes;
using testing::tiny_model_config;

class AttackTest : public ::testing::Test {
 protected:
  AttackTest()
      : model_(tiny_model_config(), tiny_classes(), 1),
        defense_(Defense::create({DefenseMode::nap, 2, 2, {2, 2}}, model_.config(), 2)) {
    model_.set_frozen(true);
  }

  AttackConfig pgd(float eps255, std::size_t steps, bool random_start = true) const {
    AttackConfig c;
    c.epsilon = eps255 / 255.0f;
    c.steps = steps;
    c.random_start = random_start;
    return c;
  }

  DualEncoderModel model_;
  Defense defense_;
  std::vector<int> labels_ = {0, 1, 2, 0};
};

TEST(ProjectTest, ClampArithmetic) {
  Tensor clean({3}, {0.5f, 0.0f, 0.3f});
  Tensor adv({3}, {0.9f, -0.3f, 0.3f});
  Tensor p = project_linf(adv, clean, 0.1f);
  EXPECT_FLOAT_EQ(p.at(0), 0.6f);
  EXPECT_FLOAT_EQ(p.at(1), 0.0f);
  EXPECT_FLOAT_EQ(p.at(2), 0.3f);
  Tensor wide = project_linf(Tensor({1}, {-0.3f}), Tensor({1}, {0.0f}), 0.5f);
  EXPECT_EQ(wide.at(0), 0.0f);
  EXPECT_TRUE(project_linf(clean, clean, 0.1f).bit_equal(clean));
  EXPECT_THROW(project_linf(adv, Tensor::zeros({2}), 0.1f), ShapeError);
}

TEST(AttackConfigTest, DefaultStepAndValidation) {
  AttackConfig c;
  c.epsilon = 1.0f / 255.0f;
  c.steps = 100;
  EXPECT_FLOAT_EQ(c.effective_step(), 2.5f / 255.0f / 100.0f);
  c.epsilon = -1.0f;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_attack_loss("kl"), AttackLoss::kl_feature);
  EXPECT_THROW(parse_attack_loss("l2"), ConfigError);
}

TEST_F(AttackTest, ZeroBudgetReturnsInput) {
  const Tensor x = random_images(4, 16, 3);
  EXPECT_TRUE(pgd_ce(model_, defense_, x, labels_, pgd(0.0f, 10), 1).bit_equal(x));
  EXPECT_TRUE(pgd_ce(model_, defense_, x, labels_, pgd(4.0f, 0, false), 1).bit_equal(x));
  EXPECT_TRUE(pgd_kl(model_, defense_, x, pgd(0.0f, 10), 1).bit_equal(x));
}

TEST_F(AttackTest, OutputsStayInBallAndRange) {
  Tensor x = random_images(4, 16, 4);
  x.data()[0] = 0.0f;
  x.data()[1] = 1.0f;
  for (float eps : {1.0f, 8.0f}) {
    for (bool kl : {false, true}) {
      AttackConfig c = pgd(eps, 5);
      c.loss = kl ? AttackLoss::kl_feature : AttackLoss::cross_entropy;
      const Tensor xa = run_attack(model_, defense_, x, labels_, c, 9);
      for (std::size_t i = 0; i < x.numel(); ++i) {
        EXPECT_LE(std::abs(xa.at(i) - x.at(i)), c.epsilon + 1e-6f);
        EXPECT_GE(xa.at(i), 0.0f);
        EXPECT_LE(xa.at(i), 1.0f);
      }
    }
  }
}

TEST_F(AttackTest, AttackLeavesParametersUntouched) {
  const ParamList backbone = snapshot(model_.parameters());
  const ParamList defense = snapshot(defense_.trainable_parameters());
  const Tensor x = random_images(4, 16, 5);
  pgd_ce(model_, defense_, x, labels_, pgd(4.0f, 3), 1);
  pgd_kl(model_, defense_, x, pgd(4.0f, 3), 1);
  EXPECT_TRUE(bit_equal(backbone, model_.parameters()));
  EXPECT_TRUE(bit_equal(defense, defense_.trainable_parameters()));
  for (const auto& p : defense_.trainable_parameters()) {
    EXPECT_TRUE(p.tensor.requires_grad());
    EXPECT_FALSE(p.tensor.has_grad());
  }
}

TEST_F(AttackTest, IncreasesCrossEntropy) {
  const Tensor x = random_images(4, 16, 6);
  Tape tape(false);
  auto ce = [&](const Tensor& images) {
    return ops::cross_entropy(tape, defended_logits(tape, model_, defense_, images), labels_).item();
  };
  const Tensor xa = pgd_ce(model_, defense_, x, labels_, pgd(8.0f, 10, false), 1);
  EXPECT_GT(ce(xa), ce(x));
}

TEST_F(AttackTest, KlObjectiveNonNegativeAndGrows) {
  const Tensor x = random_images(4, 16, 7);
  Tape tape(false);
  auto kl = [&](const Tensor& xa) {
    return ops::kl_softmax(tape, defended_image(tape, model_, defense_, x), defended_image(tape, model_, defense_, xa))
        .item();
  };
  EXPECT_NEAR(kl(x), 0.0, 1e-7);
  const Tensor xa = pgd_kl(model_, defense_, x, pgd(8.0f, 5), 2);
  EXPECT_GE(kl(xa), 0.0f);
  EXPECT_GT(kl(xa), kl(x));
}

TEST_F(AttackTest, SeededRandomStartIsDeterministic) {
  const Tensor x = random_images(4, 16, 8);
  const Tensor a = pgd_ce(model_, defense_, x, labels_, pgd(2.0f, 2), 77);
  const Tensor b = pgd_ce(model_, defense_, x, labels_, pgd(2.0f, 2), 77);
  const Tensor c = pgd_ce(model_, defense_, x, labels_, pgd(2.0f, 2), 78);
  EXPECT_TRUE(a.bit_equal(b));
  EXPECT_FALSE(a.bit_equal(c));
}

TEST_F(AttackTest, BatchFlagsAndZeroBudget) {
  Dataset d;
  d.height = d.width = 16;
  d.class_names = tiny_classes();
  const Tensor x = random_images(10, 16, 9);
  d.pixels.assign(x.data().begin(), x.data().end());
  for (int i = 0; i < 10; ++i) d.labels.push_back(i % 3);
  std::vector<std::size_t> idx(10);
  std::iota(idx.begin(), idx.end(), 0);
  const auto r = attack_batch(model_, defense_, d, idx, pgd(0.0f, 5), 1, 4);
  ASSERT_EQ(r.success.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_FALSE(r.success[i]);
    EXPECT_EQ(r.clean_pred[i], r.adv_pred[i]);
  }
  EXPECT_EQ(r.adversarial.shape(), (Shape{10, 3, 16, 16}));
  const auto s = attack_batch(model_, defense_, d, idx, pgd(8.0f, 3), 1, 4);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(s.success[i], s.clean_pred[i] == d.labels[i] && s.adv_pred[i] != d.labels[i]);
  }
}

}  // namespace
}  // namespace naptune
