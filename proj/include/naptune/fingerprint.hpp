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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "naptune/params.hpp"

namespace naptune {

using Fingerprint = std::array<std::uint8_t, 32>;

/// SHA-256 of `text`.
Fingerprint fingerprint_of(std::string_view text);
/// SHA-256 over parameter names, shapes and raw float bytes.
Fingerprint fingerprint_of(const ParamList& params);
std::string to_hex(const Fingerprint& fp);
Fingerprint fingerprint_from_hex(const std::string& hex);

}  // namespace naptune
