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
#include <set>

#include "naptune/errors.hpp"
#include "naptune/gradcheck.hpp"
#include "naptune/ops.hpp"
#include "naptune/model.hpp"
#include "test_util.hpp"

namespace naptune {
namespace {

using testing::random_images;
using testing::tiny_classes;
using testing::tiny_model_config;

TEST(VocabularyTest, TemplateWordsThenClasses) {
  Vocabulary v(tiny_classes());
  EXPECT_EQ(v.id("<pad>"), Vocabulary::kPad);
  EXPECT_EQ(v.word(v.id("photo")), "photo");
  EXPECT_EQ(v.size(), 4u + 3u);
  EXPECT_EQ(v.class_index("blue-square"), 1);
  EXPECT_THROW(v.id("dog"), VocabularyError);
  EXPECT_THROW(v.word(99), VocabularyError);
  EXPECT_THROW(Vocabulary({"photo"}), ConfigError);
}

TEST(VocabularyTest, TemplateIsPadded) {
  Vocabulary v(tiny_classes());
  TokenSequence s = tokenize_template(v, "green-triangle", 8);
  EXPECT_EQ(s.length, 5u);
  ASSERT_EQ(s.ids.size(), 8u);
  EXPECT_EQ(s.ids[4], v.id("green-triangle"));
  EXPECT_EQ(s.ids[5], Vocabulary::kPad);
  EXPECT_EQ(s.class_id, 2);
  EXPECT_THROW(tokenize_template(v, "green-triangle", 4), ConfigError);
}

TEST(ModelTest, EmbeddingsAreUnitNorm) {
  DualEncoderModel m(tiny_model_config(), tiny_classes(), 1);
  Tape tape(false);
  Tensor img = m.encode_image(tape, random_images(3, 16, 2));
  Tensor txt = m.encode_text(tape, m.class_templates());
  ASSERT_EQ(img.shape(), (Shape{3, 8}));
  ASSERT_EQ(txt.shape(), (Shape{3, 8}));
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 8; ++c) s += img.at(r * 8 + c) * img.at(r * 8 + c);
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(ModelTest, RejectsWrongImageShape) {
  DualEncoderModel m(tiny_model_config(), tiny_classes(), 1);
  Tape tape(false);
  EXPECT_THROW(m.encode_image(tape, random_images(1, 8, 2)), ShapeError);
}

TEST(ModelTest, ConfigValidation) {
  ModelConfig c = tiny_model_config();
  c.image.patch_size = 5;
  EXPECT_THROW(DualEncoderModel(c, tiny_classes(), 1), ConfigError);
  c = tiny_model_config();
  c.image.heads = 3;
  EXPECT_THROW(DualEncoderModel(c, tiny_classes(), 1), ConfigError);
}

TEST(ModelTest, SameSeedSameWeights) {
  DualEncoderModel a(tiny_model_config(), tiny_classes(), 7);
  DualEncoderModel b(tiny_model_config(), tiny_classes(), 7);
  DualEncoderModel c(tiny_model_config(), tiny_classes(), 8);
  EXPECT_TRUE(bit_equal(a.parameters(), b.parameters()));
  EXPECT_FALSE(bit_equal(a.parameters(), c.parameters()));
}

TEST(ModelTest, ParameterNamesUnique) {
  DualEncoderModel m(tiny_model_config(), tiny_classes(), 1);
  std::set<std::string> names;
  for (const auto& p : m.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}

TEST(ModelTest, FreezingClearsGradientTracking) {
  DualEncoderModel m(tiny_model_config(), tiny_classes(), 1);
  m.set_frozen(true);
  for (const auto& p : m.parameters()) EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
  m.set_frozen(false);
  for (const auto& p : m.parameters()) EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
}

TEST(ModelTest, LoadParametersChecksArchitecture) {
  DualEncoderModel a(tiny_model_config(), tiny_classes(), 1);
  DualEncoderModel b(tiny_model_config(), tiny_classes(), 2);
  b.load_parameters(a.parameters());
  EXPECT_TRUE(bit_equal(a.parameters(), b.parameters()));
  DualEncoderModel deeper(tiny_model_config(3), tiny_classes(), 1);
  EXPECT_THROW(deeper.load_parameters(a.parameters()), CheckpointError);
}

TEST(ClassifyTest, InvariantToPositiveScaleAndTiesGoLow) {
  Tensor img({2, 2}, {1, 0, 0.6f, 0.8f});
  Tensor txt({3, 2}, {0, 1, 1, 0, 0, 1});
  for (float scale : {0.01f, 1.0f, 100.0f}) {
    auto pred = classify(img, txt, scale);
    EXPECT_EQ(pred[0], 1);
    EXPECT_EQ(pred[1], 0);
  }
  EXPECT_THROW(classify(img, txt, 0.0f), ConfigError);
}

TEST(ClassifyTest, SimilarityIsCosine) {
  Tape tape(false);
  Tensor img({1, 2}, {3, 4});
  Tensor txt({1, 2}, {4, 3});
  EXPECT_NEAR(similarity(tape, img, txt).item(), 24.0 / 25.0, 1e-6);
}

TEST(GradientTest, WholeModelMatchesFiniteDifferences) {
  DualEncoderModel m(tiny_model_config(), tiny_classes(), 3);
  const std::vector<int> labels = {0, 2};
  const Tensor x = random_images(2, 16, 4);
  const ScalarFn loss = [&](Tape& t, const Tensor& images) {
    Tensor img = m.encode_image(t, images);
    Tensor txt = m.encode_text(t, m.class_templates());
    return ops::cross_entropy(t, class_logits(t, img, txt, 10.0f), labels);
  };
  EXPECT_LT(grad_check(loss, x, 1e-3f, 64), 5e-3);
  const Tensor w = m.parameters()[0].tensor;
  EXPECT_LT(grad_check([&](Tape& t, const Tensor&) { return loss(t, x); }, w, 1e-3f, 64), 5e-3);
}

TEST(PretrainTest, ZeroEpochsOnlyFreezes) {
  DualEncoderModel m(tiny_model_config(), tiny_classes(), 1);
  const ParamList before = snapshot(m.parameters());
  Dataset d;
  d.height = d.width = 16;
  d.class_names = tiny_classes();
  d.pixels.assign(3 * 16 * 16, 0.5f);
  d.labels = {0};
  PretrainConfig cfg;
  cfg.epochs = 0;
  pretrain_backbone(m, d, cfg);
  EXPECT_TRUE(m.frozen());
  EXPECT_TRUE(bit_equal(before, m.parameters()));
}

TEST(PretrainTest, LearnsSeparableColours) {
  // Three flat colours are trivially separable; a few epochs must fit them.
  Dataset d;
  d.height = d.width = 16;
  d.class_names = tiny_classes();
  const float colours[3][3] = {{0.9f, 0.1f, 0.1f}, {0.1f, 0.1f, 0.9f}, {0.1f, 0.9f, 0.1f}};
  for (int i = 0; i < 24; ++i) {
    const int k = i % 3;
    for (int c = 0; c < 3; ++c) d.pixels.insert(d.pixels.end(), 16 * 16, colours[k][c]);
    d.labels.push_back(k);
  }
  DualEncoderModel m(tiny_model_config(), tiny_classes(), 5);
  PretrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.accuracy_floor = 0.99;
  const PretrainResult r = pretrain_backbone(m, d, cfg);
  EXPECT_TRUE(r.reached_floor) << r.warning;
  EXPECT_EQ(r.history.size(), 30u);
  EXPECT_TRUE(m.frozen());
}

}  // namespace
}  // namespace naptune
