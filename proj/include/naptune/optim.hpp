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
#include <vector>

#include "naptune/params.hpp"

namespace naptune {

struct AdamWConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 1e-4f;
};

struct OptimizerState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::size_t step = 0;
};

OptimizerState make_optimizer_state(const ParamList& params);

/// One decoupled-weight-decay Adam update using each tensor's accumulated
/// gradient (a tensor without a gradient is treated as zero-gradient).
void adamw_step(const ParamList& params, OptimizerState& state, float lr, const AdamWConfig& cfg);

void zero_grads(const ParamList& params);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const ParamList& params, double max_norm);

/// lr_init * 0.5 * (1 + cos(pi * step / total_steps)), floored at 0.
float cosine_lr(std::size_t step, std::size_t total_steps, float lr_init);

}  // namespace naptune
