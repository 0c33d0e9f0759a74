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

#include "naptune/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "naptune/binary_io.hpp"
#include "naptune/errors.hpp"

namespace naptune {

nlohmann::ordered_json to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["epoch"] = r.epoch;
  j["alpha"] = r.alpha;
  j["lr"] = r.lr;
  j["clean_ce"] = r.clean_ce;
  j["adv_ce"] = r.adv_ce;
  j["loss"] = r.loss;
  j["clean_val_acc"] = r.clean_val_acc;
  j["robust_val_acc"] = r.robust_val_acc;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

MetricsRecord metrics_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  try {
    r.run_id = j.at("run_id").get<std::string>();
    r.epoch = j.at("epoch").get<std::size_t>();
    auto num = [&](const char* key) {
      const double v = j.at(key).get<double>();
      if (!std::isfinite(v)) throw NumericError(std::string("metrics field '") + key + "' is not finite");
      return v;
    };
    r.alpha = num("alpha");
    r.lr = num("lr");
    r.clean_ce = num("clean_ce");
    r.adv_ce = num("adv_ce");
    r.loss = num("loss");
    r.clean_val_acc = num("clean_val_acc");
    r.robust_val_acc = num("robust_val_acc");
    r.wall_seconds = num("wall_seconds");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad metrics record: ") + e.what());
  }
  return r;
}

std::string to_jsonl(const std::vector<MetricsRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    for (double v : {r.alpha, r.lr, r.clean_ce, r.adv_ce, r.loss, r.clean_val_acc, r.robust_val_acc}) {
      if (!std::isfinite(v)) throw NumericError("refusing to write a non-finite metric");
    }
    out += to_json(r).dump() + "\n";
  }
  return out;
}

std::vector<MetricsRecord> parse_jsonl(const std::string& text) {
  std::vector<MetricsRecord> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad metrics line: ") + e.what());
    }
    out.push_back(metrics_from_json(j));
  }
  return out;
}

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  const std::string s = to_jsonl(records);
  binary::write_file(path, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read metrics file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

std::vector<MetricsRecord> without_wall_clock(std::vector<MetricsRecord> records) {
  for (auto& r : records) r.wall_seconds = 0.0;
  return records;
}

}  // namespace naptune
