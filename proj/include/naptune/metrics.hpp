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
#include <string>
#include <vector>

#include "json.hpp"

#include "naptune/trainer.hpp"

namespace naptune {

nlohmann::ordered_json to_json(const MetricsRecord& rec);
/// NumericError when a numeric field is not finite; FormatError on bad shape.
MetricsRecord metrics_from_json(const nlohmann::json& j);

/// One JSON object per line.
std::string to_jsonl(const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> parse_jsonl(const std::string& text);

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

/// Same records with the wall-clock field cleared.
std::vector<MetricsRecord> without_wall_clock(std::vector<MetricsRecord> records);

}  // namespace naptune
