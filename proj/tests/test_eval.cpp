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

#include <numeric>

#include "naptune/errors.hpp"
#include "naptune/eval.hpp"
#include "naptune/params.hpp"
#include "test_util.hpp"

namespace naptune {
namespace {

using testing::tiny_model_config;

class EvalTest : public ::testing::Test {
 protected:
  EvalTest() : data_(make_data()), model_(tiny_model_config(), data_.class_names, 7) {
    model_.set_frozen(true);
    attack_.steps = 3;
    attack_.epsilon = 8.0f / 255.0f;
  }

  static Dataset make_data() {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.per_class = 1;
    spec.test_per_class = 6;
    spec.adapt_per_class = 1;
    spec.image_size = 16;
    spec.seed = 2;
    return gen_synthetic(spec).test;
  }

  Defense nap() const { return Defense::create({DefenseMode::nap, 2, 2, {2, 2}}, model_.config(), 1); }

  Dataset data_;
  DualEncoderModel model_;
  AttackConfig attack_;
};

TEST_F(EvalTest, CleanAccuracyMatchesIndependentCount) {
  const Defense d = nap();
  const EvalReport r = evaluate(model_, d, data_, {}, 1, "", 5);
  const auto pred = predict(model_, d, data_.all_images());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data_.size(); ++i) ok += pred[i] == data_.labels[i];
  EXPECT_DOUBLE_EQ(r.clean_acc, static_cast<double>(ok) / 18.0);
  ASSERT_EQ(r.per_class_acc.size(), 3u);
  // Balanced classes: the per-class mean is the overall accuracy.
  EXPECT_NEAR(std::accumulate(r.per_class_acc.begin(), r.per_class_acc.end(), 0.0) / 3.0, r.clean_acc, 1e-12);
  EXPECT_EQ(r.n_examples, 18u);
  EXPECT_TRUE(r.robust.empty());
}

TEST_F(EvalTest, ZeroEpsilonRobustEqualsClean) {
  AttackConfig none = attack_;
  none.epsilon = 0.0f;
  const EvalReport r = evaluate(model_, nap(), data_, {none}, 1);
  EXPECT_EQ(r.robust_at(0.0), r.clean_acc);
}

TEST_F(EvalTest, RobustEntriesAreLabelled) {
  const EvalReport r = evaluate(model_, nap(), data_, {attack_}, 1, "abc");
  ASSERT_EQ(r.robust.size(), 1u);
  EXPECT_EQ(r.robust[0].attack, "pgd3-ce@8/255");
  EXPECT_NEAR(r.robust[0].epsilon_255, 8.0, 1e-5);
  EXPECT_EQ(r.robust[0].steps, 3u);
  EXPECT_GE(r.robust[0].accuracy, 0.0);
  EXPECT_LE(r.robust[0].accuracy, 1.0);
  EXPECT_EQ(r.fingerprint, "abc");
  EXPECT_NEAR(r.robust_at(8.0), r.robust[0].accuracy, 0.0);
  EXPECT_THROW(r.robust_at(4.0), ContractError);
}

TEST_F(EvalTest, PureAndDeterministic) {
  const Defense d = nap();
  const ParamList bb = snapshot(model_.parameters());
  const ParamList df = snapshot(d.trainable_parameters());
  const EvalReport a = evaluate(model_, d, data_, {attack_}, 9, "", 4);
  const EvalReport b = evaluate(model_, d, data_, {attack_}, 9, "", 4);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(bit_equal(bb, model_.parameters()));
  EXPECT_TRUE(bit_equal(df, d.trainable_parameters()));
}

TEST_F(EvalTest, JsonRoundTripAndHeader) {
  const EvalReport r = evaluate(model_, nap(), data_, {attack_}, 4, "ff00");
  const auto j = r.to_json();
  EXPECT_EQ(j.at("header").get<std::string>(), kStrongestAttackNote);
  EXPECT_TRUE(EvalReport::from_json(nlohmann::json::parse(j.dump())) == r);
  EXPECT_THROW(EvalReport::from_json(nlohmann::json{{"clean_acc", 1.0}}), FormatError);
}

TEST_F(EvalTest, RejectsEmptyInput) {
  Dataset empty = data_.subset(std::vector<std::size_t>{});
  EXPECT_THROW(evaluate(model_, nap(), empty, {}, 1), ConfigError);
  EXPECT_THROW(evaluate(model_, nap(), data_, {}, 1, "", 0), ConfigError);
}

TEST(SweepTest, AxisNamesAndKeys) {
  for (SweepAxis a : {SweepAxis::prompt_layers, SweepAxis::train_epsilon, SweepAxis::shots, SweepAxis::refiner_depth,
                      SweepAxis::context_vectors, SweepAxis::alpha_0, SweepAxis::defense_mode}) {
    EXPECT_EQ(parse_sweep_axis(to_string(a)), a);
  }
  EXPECT_EQ(sweep_key(SweepAxis::train_epsilon), "train_eps");
  EXPECT_EQ(sweep_key(SweepAxis::context_vectors), "prompt_len");
  EXPECT_EQ(sweep_key(SweepAxis::defense_mode), "mode");
  EXPECT_EQ(sweep_key(SweepAxis::shots), "shots");
  EXPECT_THROW(parse_sweep_axis("width"), ConfigError);
}

TEST(SweepTest, ValueValidation) {
  EXPECT_NO_THROW((SweepSpec{SweepAxis::prompt_layers, {"1", "6", "12"}}.validate()));
  EXPECT_NO_THROW((SweepSpec{SweepAxis::refiner_depth, {"0", "2"}}.validate()));
  EXPECT_NO_THROW((SweepSpec{SweepAxis::train_epsilon, {"0.5", "4"}}.validate()));
  EXPECT_NO_THROW((SweepSpec{SweepAxis::defense_mode, {"vanilla", "nap"}}.validate()));
  EXPECT_THROW((SweepSpec{SweepAxis::prompt_layers, {}}.validate()), ConfigError);
  EXPECT_THROW((SweepSpec{SweepAxis::prompt_layers, {"0"}}.validate()), ConfigError);
  EXPECT_THROW((SweepSpec{SweepAxis::shots, {"1.5"}}.validate()), ConfigError);
  EXPECT_THROW((SweepSpec{SweepAxis::refiner_depth, {"-1"}}.validate()), ConfigError);
  EXPECT_THROW((SweepSpec{SweepAxis::alpha_0, {"x"}}.validate()), ConfigError);
  EXPECT_THROW((SweepSpec{SweepAxis::defense_mode, {"ensemble"}}.validate()), ConfigError);
}

TEST(SweepTest, CurveRows) {
  EvalReport a;
  a.clean_acc = 0.9;
  a.robust = {{"pgd100-ce@1/255", 1.0, 100, 0.5}};
  EvalReport b = a;
  b.clean_acc = 0.8;
  const SweepSpec spec{SweepAxis::shots, {"1", "16"}};
  const auto j = curve_json(spec, {{"1", a}, {"16", b}});
  EXPECT_EQ(j.at("axis").get<std::string>(), "shots");
  EXPECT_EQ(j.at("header").get<std::string>(), kStrongestAttackNote);
  const std::string dumped = j.dump();
  EXPECT_NE(dumped.find("0.8"), std::string::npos);
  EXPECT_NE(dumped.find("robust@1/255"), std::string::npos);
}

}  // namespace
}  // namespace naptune
