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

#include "naptune/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "naptune/errors.hpp"

namespace naptune {

double grad_check(const ScalarFn& f, const Tensor& x, float h, std::size_t max_coords) {
  if (!(h > 0.0f)) throw ConfigError("grad_check: step must be positive");
  const bool saved_rg = x.requires_grad();
  x.set_requires_grad(true);
  x.drop_grad();

  std::vector<float> analytic;
  {
    Tape tape;
    Tensor y = f(tape, x);
    if (y.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    if (!std::isfinite(y.item())) throw NumericError("grad_check: non-finite function value");
    if (y.requires_grad()) {
      tape.backward(y);
    }
    analytic = x.has_grad() ? std::vector<float>(x.grad().begin(), x.grad().end())
                            : std::vector<float>(x.numel(), 0.0f);
  }
  x.drop_grad();

  auto eval = [&] {
    Tape off(false);
    const float v = f(off, x).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value under perturbation");
    return static_cast<double>(v);
  };

  const std::size_t n = x.numel();
  const std::size_t stride = (max_coords == 0 || max_coords >= n) ? 1 : n / max_coords;
  auto xs = x.data();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; i += stride) {
    const float orig = xs[i];
    const float up = orig + h;
    const float down = orig - h;
    xs[i] = up;
    const double fp = eval();
    xs[i] = down;
    const double fm = eval();
    xs[i] = orig;
    const double numeric = (fp - fm) / (static_cast<double>(up) - static_cast<double>(down));
    const double err = std::abs(static_cast<double>(analytic[i]) - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  x.set_requires_grad(saved_rg);
  return worst;
}

}  // namespace naptune
