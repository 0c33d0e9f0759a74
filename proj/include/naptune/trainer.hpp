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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "naptune/attack.hpp"
#include "naptune/augmentor.hpp"
#include "naptune/dataset.hpp"
#include "naptune/model.hpp"
#include "naptune/tape.hpp"

namespace naptune {

struct TrainConfig {
  std::size_t epochs = 90;
  std::size_t batch_size = 64;
  float lr = 1e-3f;
  float weight_decay = 1e-4f;
  double alpha_0 = 5.0;
  AttackConfig attack{1.0f / 255.0f, 5, 0.0f, true, AttackLoss::cross_entropy, 1.0f};
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// alpha_0 / (1 + exp(-10 (tau / t_max - 0.5))).
double alpha_schedule(double tau, double t_max, double alpha_0);

struct CombinedLoss {
  Tensor loss;  // scalar on the tape
  double clean_ce = 0.0;
  double adv_ce = 0.0;
  Tensor x_adv;
};

/// CE(clean) + alpha * CE(adv), with x_adv generated by PGD against the
/// current defense. Gradients reach only the defense parameters.
CombinedLoss combined_loss(Tape& tape, const DualEncoderModel& model, const Defense& defense, const Tensor& x,
                           std::span<const int> labels, double alpha, const AttackConfig& attack,
                           std::uint64_t seed);

struct MetricsRecord {
  std::string run_id;
  std::size_t epoch = 0;
  double alpha = 0.0;
  double lr = 0.0;
  double clean_ce = 0.0;
  double adv_ce = 0.0;
  double loss = 0.0;
  double clean_val_acc = 0.0;
  double robust_val_acc = 0.0;
  double wall_seconds = 0.0;
};

struct ValidationResult {
  double clean = 0.0;
  double robust = 0.0;
};

/// Clean and robust accuracy of the defended model on `data`.
ValidationResult validate_defense(const DualEncoderModel& model, const Defense& defense, const Dataset& data,
                                  const AttackConfig& attack, std::uint64_t seed);

struct TrainResult {
  Defense final_defense;
  Defense best_defense;
  std::size_t best_epoch = 0;
  ValidationResult initial;  // before any update
  std::vector<MetricsRecord> history;
  bool validated_on_train = false;
};

/// Adversarial prompt tuning of `defense` on a frozen backbone. `defense` is
/// left untouched; the tuned copies are returned.
TrainResult run_training(const DualEncoderModel& model, const Defense& defense, const Dataset& train,
                         const TrainConfig& cfg, const std::string& run_id = "run",
                         const std::function<void(const MetricsRecord&)>& on_epoch = {});

}  // namespace naptune
