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

#include "naptune/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "naptune/errors.hpp"
#include "naptune/rng.hpp"

namespace naptune {

const std::vector<KeySpec>& config_keys() {
  using K = ValueKind;
  static const std::vector<KeySpec> keys = {
      {"seed", K::integer, "0", "run seed; every random stream derives from it"},
      // Data.
      {"classes", K::integer, "8", "synthetic classes"},
      {"per_class", K::integer, "400", "training images per class"},
      {"test_per_class", K::integer, "64", "test images per class"},
      {"adapt_per_class", K::integer, "32", "held-out images per class for few-shot tuning"},
      {"image_size", K::integer, "32", "square image side in pixels"},
      {"noise", K::real, "0.08", "pixel noise standard deviation"},
      {"contrast", K::real, "0.35", "foreground contrast against the background, in (0, 1]"},
      {"data_dir", K::text, "data", "dataset directory"},
      {"cache_dir", K::text, "cache", "checkpoint cache directory"},
      {"out_dir", K::text, "runs", "parent of timestamped output directories"},
      // Backbone.
      {"depth", K::integer, "12", "transformer layers per encoder"},
      {"width", K::integer, "64", "token width"},
      {"heads", K::integer, "4", "attention heads"},
      {"mlp_ratio", K::integer, "4", "MLP hidden multiplier"},
      {"patch_size", K::integer, "8", "image patch side"},
      {"embed_dim", K::integer, "64", "joint embedding width"},
      {"max_seq", K::integer, "16", "text sequence length"},
      {"logit_scale", K::real, "100", "fixed similarity scale"},
      {"pretrain_epochs", K::integer, "30", "backbone pretraining epochs"},
      {"pretrain_batch", K::integer, "32", "backbone pretraining batch size"},
      {"pretrain_lr", K::real, "0.001", "backbone pretraining peak learning rate"},
      {"pretrain_floor", K::real, "0.9", "clean accuracy expected after pretraining"},
      // Defense.
      {"mode", K::text, "nap", "vanilla | advpt | advpt_v | advpt_vli | advpt_vlj | nap"},
      {"prompt_len", K::integer, "4", "prompt tokens per layer"},
      {"prompt_layers", K::integer, "12", "prompted layers"},
      {"refiner_depth", K::integer, "2", "linear layers per token refiner (0 disables)"},
      {"refiner_hidden_mult", K::integer, "2", "refiner hidden width / token width"},
      // Tuning.
      {"shots", K::integer, "16", "training images per class used for tuning"},
      {"epochs", K::integer, "90", "tuning epochs"},
      {"batch_size", K::integer, "64", "tuning batch size"},
      {"lr", K::real, "0.001", "tuning peak learning rate"},
      {"weight_decay", K::real, "0.0001", "decoupled weight decay"},
      {"alpha_0", K::real, "5", "final adversarial loss weight"},
      {"val_fraction", K::real, "0.2", "share of shots held out for validation"},
      {"train_eps", K::real, "1", "training attack budget in 1/255 units"},
      {"train_steps", K::integer, "5", "training attack PGD steps"},
      {"train_random_start", K::boolean, "true", "random start for training attacks"},
      // Evaluation.
      {"eval_eps", K::real_list, "1", "evaluation budgets in 1/255 units"},
      {"eval_steps", K::integer, "100", "evaluation PGD steps"},
      {"eval_random_start", K::boolean, "true", "random start for evaluation attacks"},
      {"attack_loss", K::text, "ce", "ce | kl"},
      {"eval_limit", K::integer, "0", "evaluate the first N test images (0 = all)"},
      {"eval_checkpoint", K::text, "final", "final | best"},
      // Sweeps.
      {"axis", K::text, "prompt_layers", "sweep axis"},
      {"values", K::text_list, "1,6,12", "sweep values"},
      {"modes", K::text_list, "vanilla,advpt,advpt_v,advpt_vli,advpt_vlj,nap", "modes for compare"},
      {"ckpt", K::text, "", "checkpoint path for inspect-ckpt"},
  };
  return keys;
}

namespace {

const KeySpec& spec_of(const std::string& key) {
  for (const auto& k : config_keys()) {
    if (k.key == key) return k;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double parse_real(const std::string& key, const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (s.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError("key '" + key + "' expects a number, got '" + s + "'");
  return v;
}

std::string normalise(const KeySpec& spec, const std::string& raw) {
  const std::string v = trim(raw);
  switch (spec.kind) {
    case ValueKind::integer: {
      const char* begin = v.c_str();
      char* end = nullptr;
      const long long n = std::strtoll(begin, &end, 10);
      if (v.empty() || *end != '\0') throw ConfigError("key '" + spec.key + "' expects an integer, got '" + v + "'");
      if (n < 0) throw ConfigError("key '" + spec.key + "' must be non-negative");
      return std::to_string(n);
    }
    case ValueKind::real: return format_real(parse_real(spec.key, v));
    case ValueKind::boolean:
      if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
      if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
      throw ConfigError("key '" + spec.key + "' expects true or false, got '" + v + "'");
    case ValueKind::text: return v;
    case ValueKind::real_list: {
      std::string out;
      for (const auto& item : split_list(v)) {
        if (!out.empty()) out += ",";
        out += format_real(parse_real(spec.key, item));
      }
      if (out.empty()) throw ConfigError("key '" + spec.key + "' needs at least one value");
      return out;
    }
    case ValueKind::text_list: {
      std::string out;
      for (const auto& item : split_list(v)) {
        if (!out.empty()) out += ",";
        out += item;
      }
      return out;
    }
  }
  return v;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.key] = normalise(k, k.default_value);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  values_[key] = normalise(spec_of(key), value);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::raw(const std::string& key) const {
  spec_of(key);
  return values_.at(key);
}

long long RunConfig::integer(const std::string& key) const {
  if (spec_of(key).kind != ValueKind::integer) throw ConfigError("key '" + key + "' is not an integer");
  return std::stoll(values_.at(key));
}

std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }

double RunConfig::real(const std::string& key) const {
  if (spec_of(key).kind != ValueKind::real) throw ConfigError("key '" + key + "' is not a number");
  return std::stod(values_.at(key));
}

bool RunConfig::boolean(const std::string& key) const {
  if (spec_of(key).kind != ValueKind::boolean) throw ConfigError("key '" + key + "' is not a boolean");
  return values_.at(key) == "true";
}

std::vector<double> RunConfig::real_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(raw(key))) out.push_back(std::stod(item));
  return out;
}

std::vector<std::string> RunConfig::text_list(const std::string& key) const { return split_list(raw(key)); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : config_keys()) out += k.key + " = " + values_.at(k.key) + "\n";
  return out;
}

std::string RunConfig::canonical(const std::vector<std::string>& keys) const {
  std::string out;
  for (const auto& k : keys) out += k + "=" + raw(k) + "\n";
  return out;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.classes = count("classes");
  s.per_class = count("per_class");
  s.test_per_class = count("test_per_class");
  s.adapt_per_class = count("adapt_per_class");
  s.image_size = count("image_size");
  s.noise = static_cast<float>(real("noise"));
  s.contrast = static_cast<float>(real("contrast"));
  s.seed = seed();
  return s;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  for (EncoderConfig* e : {&m.image, &m.text}) {
    e->depth = count("depth");
    e->width = count("width");
    e->heads = count("heads");
    e->mlp_ratio = count("mlp_ratio");
    e->embed_dim = count("embed_dim");
    e->image_size = count("image_size");
    e->patch_size = count("patch_size");
    e->max_seq = count("max_seq");
  }
  m.logit_scale = static_cast<float>(real("logit_scale"));
  return m;
}

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig p;
  p.epochs = count("pretrain_epochs");
  p.batch_size = count("pretrain_batch");
  p.lr = static_cast<float>(real("pretrain_lr"));
  p.weight_decay = static_cast<float>(real("weight_decay"));
  p.accuracy_floor = real("pretrain_floor");
  p.seed = derive_seed(seed(), "pretrain");
  return p;
}

DefenseConfig RunConfig::defense_config() const {
  DefenseConfig d;
  d.mode = parse_defense_mode(text("mode"));
  d.prompt_len = count("prompt_len");
  d.prompt_layers = count("prompt_layers");
  d.refiner.depth = count("refiner_depth");
  d.refiner.hidden_mult = count("refiner_hidden_mult");
  return d;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = count("epochs");
  t.batch_size = count("batch_size");
  t.lr = static_cast<float>(real("lr"));
  t.weight_decay = static_cast<float>(real("weight_decay"));
  t.alpha_0 = real("alpha_0");
  t.val_fraction = real("val_fraction");
  t.attack.epsilon = static_cast<float>(real("train_eps") / 255.0);
  t.attack.steps = count("train_steps");
  t.attack.random_start = boolean("train_random_start");
  t.attack.loss = AttackLoss::cross_entropy;
  t.seed = derive_seed(seed(), "train");
  return t;
}

std::vector<AttackConfig> RunConfig::eval_attacks() const {
  std::vector<AttackConfig> out;
  for (double eps : real_list("eval_eps")) {
    if (eps < 0.0) throw ConfigError("eval_eps values must be >= 0");
    AttackConfig a;
    a.epsilon = static_cast<float>(eps / 255.0);
    a.steps = count("eval_steps");
    a.random_start = boolean("eval_random_start");
    a.loss = parse_attack_loss(text("attack_loss"));
    out.push_back(a);
  }
  return out;
}

}  // namespace naptune
