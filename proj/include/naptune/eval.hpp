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
#include <string>
#include <vector>

#include "json.hpp"
#include "naptune/attack.hpp"
#include "naptune/augmentor.hpp"
#include "naptune/dataset.hpp"
#include "naptune/model.hpp"

namespace naptune {

/// Strongest attack available here; reports carry this note in their header.
inline constexpr const char* kStrongestAttackNote =
    "strongest attack: PGD-100 (L-inf, white-box, untargeted); AutoAttack not included";

struct RobustEntry {
  std::string attack;
  double epsilon_255 = 0.0;
  std::size_t steps = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  double clean_acc = 0.0;
  std::vector<RobustEntry> robust;
  std::vector<double> per_class_acc;
  std::size_t n_examples = 0;
  std::string fingerprint;
  std::uint64_t seed = 0;

  /// Robust accuracy at `epsilon_255`; ContractError if not measured.
  double robust_at(double epsilon_255) const;
  nlohmann::ordered_json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport& other) const;
};

/// Clean accuracy plus one robust accuracy per attack on `data`.
EvalReport evaluate(const DualEncoderModel& model, const Defense& defense, const Dataset& data,
                    const std::vector<AttackConfig>& attacks, std::uint64_t seed,
                    const std::string& fingerprint = "", std::size_t batch_size = 64);

enum class SweepAxis { prompt_layers, train_epsilon, shots, refiner_depth, context_vectors, alpha_0, defense_mode };

std::string to_string(SweepAxis a);
SweepAxis parse_sweep_axis(const std::string& s);
/// Config key that a sweep axis overrides.
std::string sweep_key(SweepAxis a);

struct SweepSpec {
  SweepAxis axis = SweepAxis::prompt_layers;
  std::vector<std::string> values;

  void validate() const;
};

struct SweepPoint {
  std::string value;
  EvalReport report;
};

/// Plot-ready curve: one row per value with clean and robust accuracies.
nlohmann::ordered_json curve_json(const SweepSpec& spec, const std::vector<SweepPoint>& points);

}  // namespace naptune
