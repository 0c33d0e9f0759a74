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

#include "naptune/workbench.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "naptune/binary_io.hpp"
#include "naptune/errors.hpp"
#include "naptune/metrics.hpp"
#include "naptune/rng.hpp"

namespace naptune {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kDataKeys = {"seed",            "classes",    "per_class", "test_per_class",
                                            "adapt_per_class", "image_size", "noise",     "contrast"};
const std::vector<std::string> kBackboneKeys = {"depth",           "width",          "heads",       "mlp_ratio",
                                                "patch_size",      "embed_dim",      "max_seq",     "logit_scale",
                                                "pretrain_epochs", "pretrain_batch", "pretrain_lr", "weight_decay"};
const std::vector<std::string> kTrainKeys = {"shots",    "epochs",       "batch_size", "lr",
                                             "alpha_0",  "val_fraction", "train_eps",  "train_steps",
                                             "train_random_start"};

void write_text(const fs::path& path, const std::string& text) {
  binary::write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string pretrain_jsonl(const PretrainResult& r) {
  std::string out;
  for (const auto& e : r.history) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["train_accuracy"] = e.train_accuracy;
    j["lr"] = e.lr;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace

std::string describe_defense(const DefenseConfig& cfg) {
  std::ostringstream os;
  const std::string P = std::to_string(cfg.prompt_len);
  const std::string L = std::to_string(cfg.prompt_layers);
  switch (cfg.mode) {
    case DefenseMode::vanilla: return "none";
    case DefenseMode::advpt: return "text-only;layers=1;len=" + P;
    case DefenseMode::advpt_v: return "vision-only;layers=" + L + ";len=" + P;
    case DefenseMode::advpt_vlj: return "joint-mapped;layers=" + L + ";len=" + P;
    case DefenseMode::advpt_vli:
    case DefenseMode::nap: break;
  }
  os << "independent;layers=" << L << ";len=" << P;
  if (cfg.mode == DefenseMode::nap && cfg.refiner.depth > 0) {
    os << ";refiner=" << cfg.refiner.depth << "x" << cfg.refiner.hidden_mult;
  }
  return os.str();
}

Workbench::Workbench(RunConfig cfg, Logger log) : cfg_(std::move(cfg)), log_(std::move(log)) {}

void Workbench::log(const std::string& msg) const {
  if (log_) log_(msg);
}

Fingerprint Workbench::data_fingerprint() const {
  return fingerprint_of("napd/v" + std::to_string(kDatasetVersion) + "\n" + cfg_.canonical(kDataKeys));
}

Fingerprint Workbench::backbone_fingerprint() const {
  return fingerprint_of("backbone\n" + to_hex(data_fingerprint()) + "\n" + cfg_.canonical(kBackboneKeys));
}

Fingerprint Workbench::defense_fingerprint() const {
  return fingerprint_of("defense\n" + to_hex(backbone_fingerprint()) + "\n" +
                        describe_defense(cfg_.defense_config()) + "\n" + cfg_.canonical(kTrainKeys));
}

fs::path Workbench::data_dir() const { return fs::path(cfg_.text("data_dir")); }
fs::path Workbench::backbone_path() const {
  return fs::path(cfg_.text("cache_dir")) / ("backbone-" + to_hex(backbone_fingerprint()) + ".napc");
}
fs::path Workbench::defense_path() const {
  return fs::path(cfg_.text("cache_dir")) / ("defense-" + to_hex(defense_fingerprint()) + ".napc");
}
fs::path Workbench::best_defense_path() const {
  return fs::path(cfg_.text("cache_dir")) / ("defense-" + to_hex(defense_fingerprint()) + ".best.napc");
}
fs::path Workbench::defense_metrics_path() const {
  return fs::path(cfg_.text("cache_dir")) / ("defense-" + to_hex(defense_fingerprint()) + ".metrics.jsonl");
}

DataBundle Workbench::generate_data() const {
  const SyntheticSplits splits = gen_synthetic(cfg_.synthetic_spec());
  const fs::path dir = data_dir();
  save_dataset(splits.train, dir / "train.napd");
  save_dataset(splits.test, dir / "test.napd");
  save_dataset(splits.adapt, dir / "adapt.napd");
  nlohmann::ordered_json manifest;
  manifest["format"] = "NAPD";
  manifest["version"] = kDatasetVersion;
  manifest["fingerprint"] = to_hex(data_fingerprint());
  manifest["classes"] = splits.train.class_names;
  manifest["train_images"] = splits.train.size();
  manifest["test_images"] = splits.test.size();
  manifest["adapt_images"] = splits.adapt.size();
  manifest["image_shape"] = {splits.train.channels, splits.train.height, splits.train.width};
  manifest["files"] = {"train.napd", "test.napd", "adapt.napd"};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  log("wrote dataset to " + dir.string());
  return {splits.train, splits.test, splits.adapt, to_hex(data_fingerprint())};
}

DataBundle Workbench::load_data() const {
  const fs::path dir = data_dir();
  const std::string want = to_hex(data_fingerprint());
  if (fs::exists(dir / "manifest.json") && fs::exists(dir / "train.napd") && fs::exists(dir / "test.napd") &&
      fs::exists(dir / "adapt.napd")) {
    std::string have;
    try {
      have = nlohmann::json::parse(read_text(dir / "manifest.json")).at("fingerprint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad dataset manifest: ") + e.what());
    }
    if (have == want) {
      return {load_dataset(dir / "train.napd"), load_dataset(dir / "test.napd"), load_dataset(dir / "adapt.napd"),
              want};
    }
    log("dataset in " + dir.string() + " was generated from other settings; regenerating");
  }
  return generate_data();
}

DualEncoderModel Workbench::fresh_model(const DataBundle& data) const {
  return DualEncoderModel(cfg_.model_config(), data.train.class_names, derive_seed(cfg_.seed(), "model.init"));
}

Defense Workbench::fresh_defense() const {
  return Defense::create(cfg_.defense_config(), cfg_.model_config(), derive_seed(cfg_.seed(), "defense.init"));
}

Dataset Workbench::few_shot(const DataBundle& data) const {
  return sample_shots(data.adapt, cfg_.count("shots"), derive_seed(cfg_.seed(), "shots"));
}

Dataset Workbench::eval_split(const DataBundle& data) const {
  const std::size_t limit = cfg_.count("eval_limit");
  if (limit == 0 || limit >= data.test.size()) return data.test;
  std::vector<std::size_t> idx(limit);
  for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
  return data.test.subset(idx);
}

BackboneRun Workbench::backbone(const DataBundle& data, bool force) const {
  DualEncoderModel model = fresh_model(data);
  const fs::path path = backbone_path();
  const Fingerprint fp = backbone_fingerprint();
  if (!force && fs::exists(path)) {
    const Checkpoint ckpt = load_checkpoint(path, fp);
    model.load_parameters(ckpt.with_prefix("backbone."));
    model.set_frozen(true);
    log("loaded backbone " + path.string());
    return {std::move(model), {}, true, path};
  }
  log("pretraining backbone");
  PretrainResult r = pretrain_backbone(model, data.train, cfg_.pretrain_config(), [&](const PretrainEpoch& e) {
    std::ostringstream os;
    os << "pretrain epoch " << e.epoch << " loss " << e.loss << " acc " << e.train_accuracy;
    log(os.str());
  });
  if (!r.warning.empty()) log("warning: " + r.warning);
  save_checkpoint(path, {fp, prefixed(model.parameters(), "backbone.")});
  write_text(fs::path(path).replace_extension(".pretrain.jsonl"), pretrain_jsonl(r));
  return {std::move(model), std::move(r), false, path};
}

TuneRun Workbench::tune(const DualEncoderModel& model, const DataBundle& data, bool force) const {
  const Fingerprint fp = defense_fingerprint();
  const fs::path path = defense_path();
  TuneRun run{fresh_defense(), fresh_defense(), {}, false, path};
  if (!force && fs::exists(path) && fs::exists(best_defense_path()) && fs::exists(defense_metrics_path())) {
    run.final_defense.load_parameters(load_checkpoint(path, fp).with_prefix("defense."));
    run.best_defense.load_parameters(load_checkpoint(best_defense_path(), fp).with_prefix("defense."));
    run.metrics = read_metrics(defense_metrics_path());
    run.cached = true;
    log("loaded tuned defense " + path.string());
    return run;
  }
  const Dataset shots = few_shot(data);
  const std::string run_id = to_hex(fp).substr(0, 12);
  log("tuning " + cfg_.text("mode") + " on " + std::to_string(shots.size()) + " images");
  TrainResult r = run_training(model, run.final_defense, shots, cfg_.train_config(), run_id,
                               [&](const MetricsRecord& m) {
                                 std::ostringstream os;
                                 os << "epoch " << m.epoch << " alpha " << m.alpha << " loss " << m.loss
                                    << " val clean " << m.clean_val_acc << " robust " << m.robust_val_acc;
                                 log(os.str());
                               });
  run.final_defense = std::move(r.final_defense);
  run.best_defense = std::move(r.best_defense);
  run.metrics = std::move(r.history);
  const ParamList backbone = prefixed(model.parameters(), "backbone.");
  auto pack = [&](const Defense& d) {
    ParamList all = backbone;
    for (auto& p : prefixed(d.trainable_parameters(), "defense.")) all.push_back(std::move(p));
    return Checkpoint{fp, std::move(all)};
  };
  save_checkpoint(path, pack(run.final_defense));
  save_checkpoint(best_defense_path(), pack(run.best_defense));
  write_metrics(defense_metrics_path(), run.metrics);
  return run;
}

std::pair<DualEncoderModel, Defense> Workbench::load_tuned(const fs::path& path, const DataBundle& data,
                                                           bool force) const {
  const Checkpoint ckpt = load_checkpoint(path, defense_fingerprint(), force);
  DualEncoderModel model = fresh_model(data);
  model.load_parameters(ckpt.with_prefix("backbone."));
  model.set_frozen(true);
  Defense defense = fresh_defense();
  defense.load_parameters(ckpt.with_prefix("defense."));
  return {std::move(model), std::move(defense)};
}

EvalReport Workbench::evaluate(const DualEncoderModel& model, const Defense& defense, const DataBundle& data) const {
  return naptune::evaluate(model, defense, eval_split(data), cfg_.eval_attacks(),
                           derive_seed(cfg_.seed(), "eval"), to_hex(defense_fingerprint()));
}

EvalReport Workbench::run_all(bool force) const {
  const DataBundle data = load_data();
  BackboneRun bb = backbone(data, force);
  TuneRun tr = tune(bb.model, data, force);
  const std::string which = cfg_.text("eval_checkpoint");
  if (which != "final" && which != "best") throw ConfigError("eval_checkpoint must be final or best");
  return evaluate(bb.model, which == "best" ? tr.best_defense : tr.final_defense, data);
}

std::vector<SweepPoint> run_sweep(const RunConfig& base, const SweepSpec& spec, const fs::path& out_dir,
                                  const Logger& log) {
  spec.validate();
  std::vector<SweepPoint> points;
  for (const auto& value : spec.values) {
    RunConfig cfg = base;
    cfg.set(sweep_key(spec.axis), value);
    if (log) log(to_string(spec.axis) + " = " + value);
    Workbench wb(cfg, log);
    SweepPoint p{value, wb.run_all()};
    write_text(out_dir / ("report-" + to_string(spec.axis) + "-" + value + ".json"), p.report.to_json().dump(2) + "\n");
    points.push_back(std::move(p));
  }
  write_text(out_dir / ("curve-" + to_string(spec.axis) + ".json"), curve_json(spec, points).dump(2) + "\n");
  return points;
}

std::vector<SweepPoint> compare_variants(const RunConfig& base, const std::vector<DefenseMode>& modes,
                                         const fs::path& out_dir, const Logger& log) {
  if (modes.empty()) throw ConfigError("compare needs at least one mode");
  SweepSpec spec{SweepAxis::defense_mode, {}};
  for (DefenseMode m : modes) spec.values.push_back(to_string(m));
  std::vector<SweepPoint> points = run_sweep(base, spec, out_dir, log);
  write_text(out_dir / "compare.txt", ranked_table(points));
  return points;
}

std::string ranked_table(const std::vector<SweepPoint>& points) {
  std::vector<const SweepPoint*> order;
  for (const auto& p : points) order.push_back(&p);
  auto robust = [](const SweepPoint* p) { return p->report.robust.empty() ? 0.0 : p->report.robust.front().accuracy; };
  std::stable_sort(order.begin(), order.end(), [&](auto* a, auto* b) { return robust(a) > robust(b); });
  std::ostringstream os;
  os << kStrongestAttackNote << "\n";
  os << "rank  variant      clean    robust\n";
  char line[128];
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::snprintf(line, sizeof line, "%-5zu %-12s %6.2f%%  %6.2f%%\n", i + 1, order[i]->value.c_str(),
                  100.0 * order[i]->report.clean_acc, 100.0 * robust(order[i]));
    os << line;
  }
  return os.str();
}

std::vector<SweepPoint> refiner_convergence_probe(const RunConfig& base, const std::vector<std::size_t>& depths,
                                                  const fs::path& out_dir, const Logger& log) {
  if (std::find(depths.begin(), depths.end(), 0) == depths.end()) {
    throw ConfigError("refiner probe depths must include 0");
  }
  RunConfig cfg = base;
  cfg.set("mode", "nap");
  SweepSpec spec{SweepAxis::refiner_depth, {}};
  for (std::size_t d : depths) spec.values.push_back(std::to_string(d));
  return run_sweep(cfg, spec, out_dir, log);
}

}  // namespace naptune
