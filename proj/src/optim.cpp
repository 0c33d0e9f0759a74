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

#include "naptune/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "naptune/errors.hpp"

namespace naptune {

OptimizerState make_optimizer_state(const ParamList& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0f);
    s.v.emplace_back(p.tensor.numel(), 0.0f);
  }
  return s;
}

void adamw_step(const ParamList& params, OptimizerState& state, float lr, const AdamWConfig& cfg) {
  if (state.m.size() != params.size()) throw ContractError("adamw_step: optimizer state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
  const float decay = 1.0f - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) throw ContractError("adamw_step: moment shape mismatch for " + params[i].name);
    const bool has_grad = params[i].tensor.has_grad();
    std::span<const float> g = has_grad ? params[i].tensor.grad() : std::span<const float>{};
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float gj = has_grad ? g[j] : 0.0f;
      if (cfg.weight_decay != 0.0f) w[j] *= decay;
      m[j] = cfg.beta1 * m[j] + (1.0f - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0f - cfg.beta2) * gj * gj;
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.tensor.zero_grad();
}

float cosine_lr(std::size_t step, std::size_t total_steps, float lr_init) {
  if (total_steps == 0) return lr_init;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  const double lr = static_cast<double>(lr_init) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  return static_cast<float>(std::max(0.0, lr));
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float factor = static_cast<float>(max_norm / norm);
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (float& g : p.tensor.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

}  // namespace naptune
