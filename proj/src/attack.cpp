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

#include "naptune/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "naptune/errors.hpp"
#include "naptune/ops.hpp"
#include "naptune/rng.hpp"
#include "naptune/tape.hpp"

namespace naptune {

std::string to_string(AttackLoss k) { return k == AttackLoss::cross_entropy ? "ce" : "kl"; }

AttackLoss parse_attack_loss(const std::string& s) {
  if (s == "ce" || s == "cross_entropy") return AttackLoss::cross_entropy;
  if (s == "kl" || s == "kl_feature") return AttackLoss::kl_feature;
  throw ConfigError("unknown attack loss '" + s + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0f) || !std::isfinite(epsilon)) throw ConfigError("attack epsilon must be finite and >= 0");
  if (step_size < 0.0f || !std::isfinite(step_size)) throw ConfigError("attack step size must be >= 0");
  if (!(kl_temperature > 0.0f)) throw ConfigError("KL temperature must be positive");
}

float AttackConfig::effective_step() const {
  if (step_size > 0.0f) return step_size;
  if (steps == 0) return 0.0f;
  return 2.5f * epsilon / static_cast<float>(steps);
}

std::string AttackConfig::name() const {
  std::ostringstream os;
  os << "pgd" << steps << "-" << to_string(loss) << "@" << epsilon * 255.0f << "/255";
  return os.str();
}

Tensor project_linf(const Tensor& x_adv, const Tensor& x_clean, float epsilon) {
  if (x_adv.shape() != x_clean.shape()) {
    throw ShapeError("project_linf shape mismatch " + shape_str(x_adv.shape()) + " vs " +
                     shape_str(x_clean.shape()));
  }
  Tensor out = Tensor::zeros(x_adv.shape());
  auto a = x_adv.data();
  auto c = x_clean.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const float lo = std::max(0.0f, c[i] - epsilon);
    const float hi = std::min(1.0f, c[i] + epsilon);
    o[i] = std::clamp(a[i], lo, hi);
  }
  return out;
}

namespace {

std::vector<Tensor> frozen_set(const DualEncoderModel& model, const Defense& defense) {
  std::vector<Tensor> all = tensors_of(model.parameters());
  for (const auto& p : defense.trainable_parameters()) all.push_back(p.tensor);
  return all;
}

Tensor random_start(const Tensor& x, float epsilon, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "attack.start"));
  Tensor start = x.detach();
  for (float& v : start.data()) v += rng.uniform(-epsilon, epsilon);
  return project_linf(start, x, epsilon);
}

/// Generic sign-gradient ascent loop; `objective` builds the scalar loss.
template <class Objective>
Tensor pgd_loop(const Tensor& x, const AttackConfig& cfg, std::uint64_t seed, Objective objective) {
  cfg.validate();
  if (cfg.epsilon == 0.0f || (cfg.steps == 0 && !cfg.random_start)) return x.detach();
  Tensor x_adv = cfg.random_start ? random_start(x, cfg.epsilon, seed) : x.detach();
  const float step = cfg.effective_step();
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    Tape tape;
    x_adv.set_requires_grad(true);
    Tensor loss = objective(tape, x_adv);
    tape.backward(loss);
    auto g = x_adv.grad();
    for (float v : g) {
      if (!std::isfinite(v)) throw NumericError("non-finite attack gradient at PGD step " + std::to_string(s));
    }
    Tensor next = x_adv.detach();
    auto n = next.data();
    for (std::size_t i = 0; i < n.size(); ++i) {
      const float sg = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
      n[i] += step * sg;
    }
    x_adv = project_linf(next, x, cfg.epsilon);
  }
  return x_adv;
}

}  // namespace

Tensor pgd_ce(const DualEncoderModel& model, const Defense& defense, const Tensor& x, std::span<const int> labels,
              const AttackConfig& cfg, std::uint64_t seed) {
  if (labels.size() != x.dim(0)) throw ShapeError("pgd_ce: label count does not match batch");
  NoGradGuard guard(frozen_set(model, defense));
  Tensor txt;
  {
    Tape off(false);
    txt = defended_text(off, model, defense);
  }
  const float scale = model.config().logit_scale;
  return pgd_loop(x, cfg, seed, [&](Tape& tape, const Tensor& xa) {
    Tensor img = defended_image(tape, model, defense, xa);
    return ops::cross_entropy(tape, class_logits(tape, img, txt, scale), labels);
  });
}

Tensor pgd_kl(const DualEncoderModel& model, const Defense& defense, const Tensor& x, const AttackConfig& cfg,
              std::uint64_t seed) {
  NoGradGuard guard(frozen_set(model, defense));
  Tensor clean_logits;
  {
    Tape off(false);
    clean_logits = ops::scale(off, defended_image(off, model, defense, x), 1.0f / cfg.kl_temperature);
  }
  return pgd_loop(x, cfg, seed, [&](Tape& tape, const Tensor& xa) {
    Tensor adv = ops::scale(tape, defended_image(tape, model, defense, xa), 1.0f / cfg.kl_temperature);
    return ops::kl_softmax(tape, clean_logits, adv);
  });
}

Tensor run_attack(const DualEncoderModel& model, const Defense& defense, const Tensor& x,
                  std::span<const int> labels, const AttackConfig& cfg, std::uint64_t seed) {
  if (cfg.loss == AttackLoss::kl_feature) return pgd_kl(model, defense, x, cfg, seed);
  return pgd_ce(model, defense, x, labels, cfg, seed);
}

std::vector<int> predict(const DualEncoderModel& model, const Defense& defense, const Tensor& images) {
  Tape off(false);
  Tensor img = defended_image(off, model, defense, images);
  Tensor txt = defended_text(off, model, defense);
  return classify(img, txt, model.config().logit_scale);
}

AttackBatchResult attack_batch(const DualEncoderModel& model, const Defense& defense, const Dataset& data,
                               std::span<const std::size_t> indices, const AttackConfig& cfg, std::uint64_t seed,
                               std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("attack batch size must be positive");
  AttackBatchResult r;
  const std::size_t n = indices.size();
  std::vector<float> pixels;
  pixels.reserve(n * data.image_numel());
  for (std::size_t start = 0, b = 0; start < n; start += batch_size, ++b) {
    const std::size_t count = std::min(batch_size, n - start);
    const auto idx = indices.subspan(start, count);
    const Tensor x = data.images(idx);
    const std::vector<int> y = data.labels_of(idx);
    const Tensor xa = run_attack(model, defense, x, y, cfg, derive_seed(seed, "attack.batch", b));
    const std::vector<int> pc = predict(model, defense, x);
    const std::vector<int> pa = predict(model, defense, xa);
    for (std::size_t i = 0; i < count; ++i) {
      r.clean_pred.push_back(pc[i]);
      r.adv_pred.push_back(pa[i]);
      r.success.push_back(pc[i] == y[i] && pa[i] != y[i]);
    }
    auto d = xa.data();
    pixels.insert(pixels.end(), d.begin(), d.end());
  }
  r.adversarial = Tensor({n, data.channels, data.height, data.width}, std::move(pixels));
  return r;
}

}  // namespace naptune
