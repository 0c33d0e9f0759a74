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

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "naptune/augmentor.hpp"
#include "naptune/model.hpp"
#include "naptune/tensor.hpp"

namespace naptune {

enum class AttackLoss { cross_entropy, kl_feature };

std::string to_string(AttackLoss k);
AttackLoss parse_attack_loss(const std::string& s);

struct AttackConfig {
  float epsilon = 1.0f / 255.0f;  // L-infinity budget in pixel units
  std::size_t steps = 100;
  float step_size = 0.0f;  // 0 selects 2.5 * epsilon / steps
  bool random_start = true;
  AttackLoss loss = AttackLoss::cross_entropy;
  float kl_temperature = 1.0f;

  void validate() const;
  float effective_step() const;
  /// Short label such as "pgd100-ce@1/255".
  std::string name() const;
};

/// Clamps x_adv into [x - eps, x + eps] intersected with [0, 1].
Tensor project_linf(const Tensor& x_adv, const Tensor& x_clean, float epsilon);

/// Untargeted L-infinity PGD maximizing cross-entropy through the defended
/// forward path. `seed` drives the random start only.
Tensor pgd_ce(const DualEncoderModel& model, const Defense& defense, const Tensor& x, std::span<const int> labels,
              const AttackConfig& cfg, std::uint64_t seed);

/// Label-free PGD maximizing KL(softmax(f(x)/t) || softmax(f(x')/t)) over
/// embedding coordinates.
Tensor pgd_kl(const DualEncoderModel& model, const Defense& defense, const Tensor& x, const AttackConfig& cfg,
              std::uint64_t seed);

/// Dispatches on cfg.loss.
Tensor run_attack(const DualEncoderModel& model, const Defense& defense, const Tensor& x,
                  std::span<const int> labels, const AttackConfig& cfg, std::uint64_t seed);

struct AttackBatchResult {
  Tensor adversarial;
  std::vector<int> clean_pred;
  std::vector<int> adv_pred;
  std::vector<bool> success;  // correct before, wrong after
};

/// Attacks `indices` of `data` in mini-batches; seeds derive from `seed` and
/// the batch index.
AttackBatchResult attack_batch(const DualEncoderModel& model, const Defense& defense, const Dataset& data,
                               std::span<const std::size_t> indices, const AttackConfig& cfg, std::uint64_t seed,
                               std::size_t batch_size = 64);

/// Predicted classes of the defended model.
std::vector<int> predict(const DualEncoderModel& model, const Defense& defense, const Tensor& images);

}  // namespace naptune
