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

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "naptune/attack.hpp"
#include "naptune/checkpoint.hpp"
#include "naptune/config.hpp"
#include "naptune/errors.hpp"
#include "naptune/eval.hpp"
#include "naptune/metrics.hpp"
#include "naptune/workbench.hpp"

namespace fs = std::filesystem;
using namespace naptune;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  bool force = false;
  std::string out;
};

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

RunConfig resolve(const CommonArgs& args) {
  RunConfig cfg = args.config.empty() ? RunConfig() : RunConfig::load(args.config);
  for (const auto& s : args.sets) cfg.set_assignment(s);
  if (const char* seed = std::getenv("NAPTUNE_SEED"); seed != nullptr && *seed != '\0') cfg.set("seed", seed);
  return cfg;
}

fs::path make_out_dir(const std::string& command, const CommonArgs& args, const RunConfig& cfg) {
  const fs::path base = args.out.empty() ? fs::path(cfg.text("out_dir")) : fs::path(args.out);
  const std::string stem = command + "-" + timestamp();
  fs::path dir = base / stem;
  for (int n = 2; fs::exists(dir); ++n) dir = base / (stem + "-" + std::to_string(n));
  fs::create_directories(dir);
  write_text(dir / "config.resolved", cfg.to_text());
  return dir;
}

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : file_(path) {}
  void operator()(const std::string& msg) {
    std::cerr << "[naptune] " << msg << "\n";
    file_ << msg << "\n";
    file_.flush();
  }

 private:
  std::ofstream file_;
};

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

int finish_attack_or_eval(const std::string& command, const RunConfig& cfg, const Workbench& wb,
                          const DualEncoderModel& model, const Defense& defense, const DataBundle& data,
                          const fs::path& out) {
  if (command == "eval") {
    const EvalReport report = wb.evaluate(model, defense, data);
    write_json(out / "report.json", report.to_json());
    std::cout << report.to_json().dump(2) << "\n";
    return kExitOk;
  }
  const Dataset split = wb.eval_split(data);
  const AttackConfig attack = cfg.eval_attacks().front();
  std::vector<std::size_t> idx(split.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto r = attack_batch(model, defense, split, idx, attack, derive_seed(cfg.seed(), "cli.attack"));
  Dataset adv = split;
  auto d = r.adversarial.data();
  adv.pixels.assign(d.begin(), d.end());
  save_dataset(adv, out / "adversarial.napd");
  std::size_t successes = 0;
  std::size_t robust = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    successes += r.success[i];
    robust += r.adv_pred[i] == split.labels[i];
  }
  nlohmann::ordered_json j;
  j["attack"] = attack.name();
  j["examples"] = idx.size();
  j["successes"] = successes;
  j["robust_acc"] = static_cast<double>(robust) / static_cast<double>(idx.size());
  j["fingerprint"] = to_hex(wb.defense_fingerprint());
  write_json(out / "attack.json", j);
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int run_command(const std::string& command, const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  const fs::path out = make_out_dir(command, args, cfg);
  auto runlog = std::make_shared<RunLog>(out / "log.txt");
  Logger log = [runlog](const std::string& m) { (*runlog)(m); };
  Workbench wb(cfg, log);
  log("output directory " + out.string());

  if (command == "gen-data") {
    const DataBundle data = wb.generate_data();
    nlohmann::ordered_json j;
    j["data_dir"] = wb.data_dir().string();
    j["fingerprint"] = data.fingerprint;
    j["train_images"] = data.train.size();
    j["test_images"] = data.test.size();
    j["adapt_images"] = data.adapt.size();
    write_json(out / "summary.json", j);
    return kExitOk;
  }

  const DataBundle data = wb.load_data();

  if (command == "inspect-ckpt") {
    const std::string path = cfg.text("ckpt");
    if (path.empty()) throw ConfigError("inspect-ckpt needs --set ckpt=<path>");
    const Checkpoint ckpt = load_checkpoint(path);
    nlohmann::ordered_json j;
    j["path"] = path;
    j["fingerprint"] = to_hex(ckpt.fingerprint);
    j["tensors"] = ckpt.params.size();
    j["values"] = count_values(ckpt.params);
    j["defense_values"] = count_values(ckpt.with_prefix("defense."));
    j["table"] = nlohmann::ordered_json::array();
    for (const auto& p : ckpt.params) j["table"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    write_json(out / "inspect.json", j);
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }

  if (command == "sweep") {
    const SweepSpec spec{parse_sweep_axis(cfg.text("axis")), cfg.text_list("values")};
    const auto points = run_sweep(cfg, spec, out, log);
    std::cout << curve_json(spec, points).dump(2) << "\n";
    return kExitOk;
  }

  if (command == "compare") {
    std::vector<DefenseMode> modes;
    for (const auto& m : cfg.text_list("modes")) modes.push_back(parse_defense_mode(m));
    const auto points = compare_variants(cfg, modes, out, log);
    std::cout << ranked_table(points);
    return kExitOk;
  }

  const bool from_ckpt = (command == "eval" || command == "attack") && !cfg.text("ckpt").empty();
  if (from_ckpt) {
    auto [model, defense] = wb.load_tuned(cfg.text("ckpt"), data, args.force);
    return finish_attack_or_eval(command, cfg, wb, model, defense, data, out);
  }

  BackboneRun bb = wb.backbone(data, args.force && command == "pretrain");
  if (command == "pretrain") {
    std::ostringstream os;
    for (const auto& e : bb.pretrain.history) {
      nlohmann::ordered_json j{{"epoch", e.epoch}, {"loss", e.loss}, {"train_accuracy", e.train_accuracy}, {"lr", e.lr}};
      os << j.dump() << "\n";
    }
    write_text(out / "pretrain.jsonl", os.str());
    nlohmann::ordered_json j;
    j["checkpoint"] = bb.checkpoint.string();
    j["fingerprint"] = to_hex(wb.backbone_fingerprint());
    j["cached"] = bb.cached;
    j["clean_accuracy"] = clean_accuracy(bb.model, data.test);
    if (!bb.pretrain.warning.empty()) j["warning"] = bb.pretrain.warning;
    write_json(out / "summary.json", j);
    return kExitOk;
  }

  if (command == "tune") {
    const TuneRun tr = wb.tune(bb.model, data, args.force);
    write_metrics(out / "metrics.jsonl", tr.metrics);
    nlohmann::ordered_json j;
    j["checkpoint"] = tr.checkpoint.string();
    j["best_checkpoint"] = wb.best_defense_path().string();
    j["fingerprint"] = to_hex(wb.defense_fingerprint());
    j["cached"] = tr.cached;
    j["trainable_values"] = count_values(tr.final_defense.trainable_parameters());
    write_json(out / "summary.json", j);
    return kExitOk;
  }

  if (command != "eval" && command != "attack") throw ConfigError("unknown command " + command);
  TuneRun tr = wb.tune(bb.model, data, false);
  write_metrics(out / "metrics.jsonl", tr.metrics);
  const Defense& defense = cfg.text("eval_checkpoint") == "best" ? tr.best_defense : tr.final_defense;
  return finish_attack_or_eval(command, cfg, wb, bb.model, defense, data, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"naptune: adversarial prompt tuning workbench"};
  app.require_subcommand(1, 1);
  CommonArgs args;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "render the synthetic dataset"},
      {"pretrain", "pretrain and freeze the backbone"},
      {"tune", "adversarially tune prompts (and refiners) on the frozen backbone"},
      {"attack", "run the evaluation attack and save adversarial images"},
      {"eval", "clean and robust accuracy report"},
      {"sweep", "train and evaluate one configuration per sweep value"},
      {"compare", "train and rank defense variants"},
      {"inspect-ckpt", "describe a checkpoint file"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", args.config, "key = value config file");
    sub->add_option("--set", args.sets, "override, key=value (repeatable)");
    sub->add_flag("--force", args.force, "retrain and ignore fingerprint mismatches");
    sub->add_option("--out", args.out, "parent directory for run outputs");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run_command(command, args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
