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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "naptune/attack.hpp"
#include "naptune/augmentor.hpp"
#include "naptune/dataset.hpp"
#include "naptune/model.hpp"
#include "naptune/trainer.hpp"

namespace naptune {

enum class ValueKind { integer, real, boolean, text, real_list, text_list };

struct KeySpec {
  std::string key;
  ValueKind kind;
  std::string default_value;
  std::string doc;
};

/// Every accepted configuration key, in echo order.
const std::vector<KeySpec>& config_keys();

/// Flat key/value run configuration. Unknown keys are rejected and values
/// are normalised on assignment, so equal settings print identically.
class RunConfig {
 public:
  RunConfig();

  /// Parses "key = value" lines; '#' starts a comment.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Applies "key=value".
  void set_assignment(const std::string& assignment);

  const std::string& raw(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  const std::string& text(const std::string& key) const { return raw(key); }
  std::vector<double> real_list(const std::string& key) const;
  std::vector<std::string> text_list(const std::string& key) const;

  /// The fully resolved document.
  std::string to_text() const;
  /// "key=value\n" for the given keys only, for fingerprinting.
  std::string canonical(const std::vector<std::string>& keys) const;

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  SyntheticSpec synthetic_spec() const;
  ModelConfig model_config() const;
  PretrainConfig pretrain_config() const;
  DefenseConfig defense_config() const;
  TrainConfig train_config() const;
  /// One attack per entry of eval_eps (values in 1/255 units).
  std::vector<AttackConfig> eval_attacks() const;

  bool operator==(const RunConfig& other) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace naptune
