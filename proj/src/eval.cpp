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

#include "naptune/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "naptune/errors.hpp"
#include "naptune/rng.hpp"

namespace naptune {

double EvalReport::robust_at(double epsilon_255) const {
  for (const auto& r : robust) {
    if (std::abs(r.epsilon_255 - epsilon_255) < 1e-4) return r.accuracy;  // float epsilon stored
  }
  throw ContractError("no robust accuracy recorded at epsilon " + std::to_string(epsilon_255) + "/255");
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["header"] = kStrongestAttackNote;
  j["fingerprint"] = fingerprint;
  j["seed"] = seed;
  j["n_examples"] = n_examples;
  j["clean_acc"] = clean_acc;
  j["robust_acc"] = nlohmann::ordered_json::array();
  for (const auto& r : robust) {
    j["robust_acc"].push_back(
        {{"attack", r.attack}, {"epsilon_255", r.epsilon_255}, {"steps", r.steps}, {"accuracy", r.accuracy}});
  }
  j["per_class_acc"] = per_class_acc;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_examples = j.at("n_examples").get<std::size_t>();
    r.clean_acc = j.at("clean_acc").get<double>();
    for (const auto& e : j.at("robust_acc")) {
      r.robust.push_back({e.at("attack").get<std::string>(), e.at("epsilon_255").get<double>(),
                          e.at("steps").get<std::size_t>(), e.at("accuracy").get<double>()});
    }
    r.per_class_acc = j.at("per_class_acc").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad evaluation report: ") + e.what());
  }
  return r;
}

bool EvalReport::operator==(const EvalReport& o) const {
  if (robust.size() != o.robust.size()) return false;
  for (std::size_t i = 0; i < robust.size(); ++i) {
    const auto& a = robust[i];
    const auto& b = o.robust[i];
    if (a.attack != b.attack || a.epsilon_255 != b.epsilon_255 || a.steps != b.steps || a.accuracy != b.accuracy) {
      return false;
    }
  }
  return clean_acc == o.clean_acc && per_class_acc == o.per_class_acc && n_examples == o.n_examples &&
         fingerprint == o.fingerprint && seed == o.seed;
}

EvalReport evaluate(const DualEncoderModel& model, const Defense& defense, const Dataset& data,
                    const std::vector<AttackConfig>& attacks, std::uint64_t seed, const std::string& fingerprint,
                    std::size_t batch_size) {
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  if (batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
  EvalReport report;
  report.n_examples = data.size();
  report.fingerprint = fingerprint;
  report.seed = seed;

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> pred;
  for (std::size_t start = 0; start < all.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, all.size() - start);
    auto p = predict(model, defense, data.images(std::span(all).subspan(start, n)));
    pred.insert(pred.end(), p.begin(), p.end());
  }
  const std::size_t k = data.num_classes();
  std::vector<std::size_t> hits(k, 0);
  std::vector<std::size_t> totals(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto y = static_cast<std::size_t>(data.labels[i]);
    ++totals[y];
    if (pred[i] == data.labels[i]) {
      ++hits[y];
      ++correct;
    }
  }
  report.clean_acc = static_cast<double>(correct) / static_cast<double>(all.size());
  for (std::size_t c = 0; c < k; ++c) {
    report.per_class_acc.push_back(totals[c] ? static_cast<double>(hits[c]) / static_cast<double>(totals[c]) : 0.0);
  }

  for (const auto& attack : attacks) {
    RobustEntry entry{attack.name(), static_cast<double>(attack.epsilon) * 255.0, attack.steps, 0.0};
    if (attack.epsilon == 0.0f) {
      entry.accuracy = report.clean_acc;
    } else {
      const auto r = attack_batch(model, defense, data, all, attack, derive_seed(seed, "eval." + attack.name()),
                                  batch_size);
      std::size_t ok = 0;
      for (std::size_t i = 0; i < all.size(); ++i) ok += r.adv_pred[i] == data.labels[i];
      entry.accuracy = static_cast<double>(ok) / static_cast<double>(all.size());
    }
    report.robust.push_back(entry);
  }
  return report;
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::prompt_layers: return "prompt_layers";
    case SweepAxis::train_epsilon: return "train_epsilon";
    case SweepAxis::shots: return "shots";
    case SweepAxis::refiner_depth: return "refiner_depth";
    case SweepAxis::context_vectors: return "context_vectors";
    case SweepAxis::alpha_0: return "alpha_0";
    case SweepAxis::defense_mode: return "defense_mode";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string& s) {
  for (SweepAxis a : {SweepAxis::prompt_layers, SweepAxis::train_epsilon, SweepAxis::shots, SweepAxis::refiner_depth,
                      SweepAxis::context_vectors, SweepAxis::alpha_0, SweepAxis::defense_mode}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown sweep axis '" + s + "'");
}

std::string sweep_key(SweepAxis a) {
  switch (a) {
    case SweepAxis::prompt_layers: return "prompt_layers";
    case SweepAxis::train_epsilon: return "train_eps";
    case SweepAxis::shots: return "shots";
    case SweepAxis::refiner_depth: return "refiner_depth";
    case SweepAxis::context_vectors: return "prompt_len";
    case SweepAxis::alpha_0: return "alpha_0";
    case SweepAxis::defense_mode: return "mode";
  }
  return "";
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (const auto& v : values) {
    if (axis == SweepAxis::defense_mode) {
      parse_defense_mode(v);
      continue;
    }
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || !std::isfinite(x)) throw ConfigError("sweep value '" + v + "' is not a number");
    const bool integral = std::floor(x) == x;
    switch (axis) {
      case SweepAxis::prompt_layers:
      case SweepAxis::shots:
        if (!integral || x < 1) throw ConfigError("sweep value '" + v + "' must be an integer >= 1");
        break;
      case SweepAxis::refiner_depth:
      case SweepAxis::context_vectors:
        if (!integral || x < 0) throw ConfigError("sweep value '" + v + "' must be an integer >= 0");
        break;
      default:
        if (x < 0) throw ConfigError("sweep value '" + v + "' must be >= 0");
    }
  }
}

nlohmann::ordered_json curve_json(const SweepSpec& spec, const std::vector<SweepPoint>& points) {
  nlohmann::ordered_json j;
  j["axis"] = to_string(spec.axis);
  j["header"] = kStrongestAttackNote;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    nlohmann::ordered_json row;
    row["value"] = p.value;
    row["clean_acc"] = p.report.clean_acc;
    for (const auto& r : p.report.robust) {
      char key[48];
      std::snprintf(key, sizeof key, "robust@%g/255", r.epsilon_255);
      row[key] = r.accuracy;
    }
    row["fingerprint"] = p.report.fingerprint;
    j["points"].push_back(row);
  }
  return j;
}

}  // namespace naptune
