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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "naptune/fingerprint.hpp"
#include "naptune/params.hpp"

namespace naptune {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Fingerprint fingerprint{};
  ParamList params;

  /// Parameters whose name starts with `prefix`, with the prefix removed.
  ParamList with_prefix(const std::string& prefix) const;
};

/// NAPC: "NAPC", u32 version, 32-byte fingerprint, u32 count, then per
/// parameter a length-prefixed name, u32 rank, u32 dims, f32 data.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Loads and, when `expected` is given, verifies the fingerprint. A mismatch
/// is a CheckpointError unless `force` is set.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<Fingerprint>& expected = {},
                           bool force = false);

/// Prefixes every name, for packing several parameter groups in one file.
ParamList prefixed(const ParamList& params, const std::string& prefix);

}  // namespace naptune
