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

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "naptune/augmentor.hpp"
#include "naptune/checkpoint.hpp"
#include "naptune/config.hpp"
#include "naptune/dataset.hpp"
#include "naptune/eval.hpp"
#include "naptune/model.hpp"
#include "naptune/trainer.hpp"

namespace naptune {

using Logger = std::function<void(const std::string&)>;

struct DataBundle {
  Dataset train;
  Dataset test;
  Dataset adapt;  // few-shot pool, disjoint from pretraining images
  std::string fingerprint;
};

struct BackboneRun {
  DualEncoderModel model;
  PretrainResult pretrain;  // empty history when loaded from cache
  bool cached = false;
  std::filesystem::path checkpoint;
};

struct TuneRun {
  Defense final_defense;
  Defense best_defense;
  std::vector<MetricsRecord> metrics;
  bool cached = false;
  std::filesystem::path checkpoint;
};

/// End-to-end pipeline for one resolved configuration. Backbones and tuned
/// defenses are cached under cache_dir by configuration fingerprint.
class Workbench {
 public:
  explicit Workbench(RunConfig cfg, Logger log = {});

  const RunConfig& config() const { return cfg_; }

  Fingerprint data_fingerprint() const;
  Fingerprint backbone_fingerprint() const;
  Fingerprint defense_fingerprint() const;

  std::filesystem::path data_dir() const;
  std::filesystem::path backbone_path() const;
  std::filesystem::path defense_path() const;
  std::filesystem::path best_defense_path() const;
  std::filesystem::path defense_metrics_path() const;

  /// Renders the synthetic splits and writes one NAPD file per split plus
  /// manifest.json.
  DataBundle generate_data() const;
  /// Loads the dataset files, generating them when absent or stale.
  DataBundle load_data() const;

  /// Pretrains (or loads) the frozen backbone.
  BackboneRun backbone(const DataBundle& data, bool force = false) const;
  /// Tunes (or loads) the defense on the few-shot training split.
  TuneRun tune(const DualEncoderModel& model, const DataBundle& data, bool force = false) const;
  /// Loads a defense checkpoint and its backbone. The stored fingerprint must
  /// match this configuration unless `force` is set.
  std::pair<DualEncoderModel, Defense> load_tuned(const std::filesystem::path& path, const DataBundle& data,
                                                  bool force = false) const;

  /// Evaluation over the (optionally truncated) test split.
  EvalReport evaluate(const DualEncoderModel& model, const Defense& defense, const DataBundle& data) const;

  /// load_data -> backbone -> tune -> evaluate.
  EvalReport run_all(bool force = false) const;

  DualEncoderModel fresh_model(const DataBundle& data) const;
  Defense fresh_defense() const;
  Dataset few_shot(const DataBundle& data) const;
  Dataset eval_split(const DataBundle& data) const;

 private:
  void log(const std::string& msg) const;

  RunConfig cfg_;
  Logger log_;
};

/// Canonical text naming the trainable layout of a defense configuration.
/// Configurations that build identical defenses share one description.
std::string describe_defense(const DefenseConfig& cfg);

/// One configuration per value; each report is written to `out_dir` as soon
/// as it completes, then the curve file.
std::vector<SweepPoint> run_sweep(const RunConfig& base, const SweepSpec& spec, const std::filesystem::path& out_dir,
                                  const Logger& log = {});

/// Tunes every mode from the same backbone and seed and ranks them by robust
/// accuracy at the first evaluation budget.
std::vector<SweepPoint> compare_variants(const RunConfig& base, const std::vector<DefenseMode>& modes,
                                         const std::filesystem::path& out_dir, const Logger& log = {});
std::string ranked_table(const std::vector<SweepPoint>& points);

/// NAP at each refiner depth; depths must include 0.
std::vector<SweepPoint> refiner_convergence_probe(const RunConfig& base, const std::vector<std::size_t>& depths,
                                                  const std::filesystem::path& out_dir, const Logger& log = {});

}  // namespace naptune
