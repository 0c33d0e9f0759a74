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
#include <functional>

#include "naptune/tape.hpp"
#include "naptune/tensor.hpp"

namespace naptune {

using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Compares the taped gradient of scalar `f` at `x` against central differences.
///
/// Returns max_i |analytic_i - numeric_i| / max(1, |numeric_i|). When
/// `max_coords` is nonzero only an evenly strided subset of that many
/// coordinates is probed. `x` is restored on return and its grad dropped.
double grad_check(const ScalarFn& f, const Tensor& x, float h, std::size_t max_coords = 0);

}  // namespace naptune
