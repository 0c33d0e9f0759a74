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

#include "naptune/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "naptune/errors.hpp"
#include "naptune/ops.hpp"
#include "naptune/optim.hpp"
#include "naptune/rng.hpp"

namespace naptune {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(alpha_0 >= 0.0)) throw ConfigError("alpha_0 must be >= 0");
  if (!(lr >= 0.0f) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (!(weight_decay >= 0.0f)) throw ConfigError("weight_decay must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  attack.validate();
}

double alpha_schedule(double tau, double t_max, double alpha_0) {
  if (t_max <= 0.0) throw ConfigError("alpha schedule needs t_max > 0");
  if (tau < 0.0 || tau > t_max) throw ConfigError("alpha schedule epoch outside [0, t_max]");
  return alpha_0 / (1.0 + std::exp(-10.0 * (tau / t_max - 0.5)));
}

CombinedLoss combined_loss(Tape& tape, const DualEncoderModel& model, const Defense& defense, const Tensor& x,
                           std::span<const int> labels, double alpha, const AttackConfig& attack,
                           std::uint64_t seed) {
  if (!model.frozen()) throw ContractError("combined_loss requires a frozen backbone");
  CombinedLoss out;
  out.x_adv = pgd_ce(model, defense, x, labels, attack, seed);
  const float scale = model.config().logit_scale;
  Tensor txt = defended_text(tape, model, defense);
  Tensor clean = ops::cross_entropy(tape, class_logits(tape, defended_image(tape, model, defense, x), txt, scale),
                                    labels);
  Tensor adv = ops::cross_entropy(
      tape, class_logits(tape, defended_image(tape, model, defense, out.x_adv), txt, scale), labels);
  out.clean_ce = clean.item();
  out.adv_ce = adv.item();
  out.loss = ops::add(tape, clean, ops::scale(tape, adv, static_cast<float>(alpha)));
  return out;
}

ValidationResult validate_defense(const DualEncoderModel& model, const Defense& defense, const Dataset& data,
                                  const AttackConfig& attack, std::uint64_t seed) {
  if (data.size() == 0) throw ConfigError("validation set is empty");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const AttackBatchResult r = attack_batch(model, defense, data, idx, attack, seed);
  std::size_t clean = 0;
  std::size_t robust = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    clean += r.clean_pred[i] == data.labels[i];
    robust += r.adv_pred[i] == data.labels[i];
  }
  const double n = static_cast<double>(idx.size());
  return {static_cast<double>(clean) / n, static_cast<double>(robust) / n};
}

TrainResult run_training(const DualEncoderModel& model, const Defense& defense, const Dataset& data,
                         const TrainConfig& cfg, const std::string& run_id,
                         const std::function<void(const MetricsRecord&)>& on_epoch) {
  cfg.validate();
  if (!model.frozen()) throw ContractError("run_training requires a frozen backbone");
  if (data.size() == 0) throw ConfigError("run_training: empty training set");

  TrainResult result;
  TrainValSplit split = stratified_split(data, cfg.val_fraction, derive_seed(cfg.seed, "train.split"));
  if (split.val.size() == 0) {
    split.val = split.train;
    result.validated_on_train = true;
  }
  const Dataset& train = split.train;
  const Dataset& val = split.val;

  Defense work = defense.clone();
  const ParamList params = work.trainable_parameters();
  const std::uint64_t val_seed = derive_seed(cfg.seed, "train.val");
  result.initial = validate_defense(model, work, val, cfg.attack, val_seed);

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  if (params.empty()) {
    MetricsRecord rec;
    rec.run_id = run_id;
    rec.alpha = alpha_schedule(0.0, static_cast<double>(cfg.epochs), cfg.alpha_0);
    rec.clean_val_acc = result.initial.clean;
    rec.robust_val_acc = result.initial.robust;
    rec.wall_seconds = elapsed();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    result.final_defense = work;
    result.best_defense = work.clone();
    return result;
  }

  OptimizerState state = make_optimizer_state(params);
  AdamWConfig opt;
  opt.weight_decay = cfg.weight_decay;
  const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = steps_per_epoch * cfg.epochs;
  std::mt19937_64 shuffle(derive_seed(cfg.seed, "train.shuffle"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  double best_robust = -1.0;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double alpha = alpha_schedule(static_cast<double>(epoch), static_cast<double>(cfg.epochs), cfg.alpha_0);
    std::shuffle(order.begin(), order.end(), shuffle);
    MetricsRecord rec;
    rec.run_id = run_id;
    rec.epoch = epoch;
    rec.alpha = alpha;
    rec.lr = cosine_lr(step, total, cfg.lr);
    for (std::size_t start = 0, b = 0; start < train.size(); start += cfg.batch_size, ++b) {
      const std::size_t n = std::min(cfg.batch_size, train.size() - start);
      std::span<const std::size_t> idx(order.data() + start, n);
      const std::vector<int> labels = train.labels_of(idx);
      Tape tape;
      CombinedLoss cl = combined_loss(tape, model, work, train.images(idx), labels, alpha, cfg.attack,
                                      derive_seed(cfg.seed, "train.attack", step));
      const float loss = cl.loss.item();
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      zero_grads(params);
      tape.backward(cl.loss);
      adamw_step(params, state, cosine_lr(step, total, cfg.lr), opt);
      ++step;
      const double w = static_cast<double>(n) / static_cast<double>(train.size());
      rec.loss += w * loss;
      rec.clean_ce += w * cl.clean_ce;
      rec.adv_ce += w * cl.adv_ce;
    }
    zero_grads(params);
    const ValidationResult v = validate_defense(model, work, val, cfg.attack, val_seed);
    rec.clean_val_acc = v.clean;
    rec.robust_val_acc = v.robust;
    rec.wall_seconds = elapsed();
    if (v.robust > best_robust) {
      best_robust = v.robust;
      result.best_epoch = epoch;
      result.best_defense = work.clone();
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final_defense = work;
  return result;
}

}  // namespace naptune
