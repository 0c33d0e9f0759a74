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

#include "naptune/augmentor.hpp"

#include <algorithm>
#include <cmath>

#include "naptune/errors.hpp"
#include "naptune/ops.hpp"
#include "naptune/rng.hpp"

namespace naptune {

namespace {

constexpr float kPromptInitStd = 0.02f;

const char* modality_name(Modality m) { return m == Modality::image ? "image" : "text"; }

}  // namespace

std::string to_string(Coupling c) {
  switch (c) {
    case Coupling::independent: return "independent";
    case Coupling::joint_mapped: return "joint-mapped";
    case Coupling::text_only: return "text-only";
    case Coupling::vision_only: return "vision-only";
  }
  return "?";
}

Coupling parse_coupling(const std::string& s) {
  for (Coupling c : {Coupling::independent, Coupling::joint_mapped, Coupling::text_only, Coupling::vision_only}) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown prompt coupling '" + s + "'");
}

// ---------------------------------------------------------------------------
// PromptBank

PromptBank PromptBank::init(const PromptConfig& cfg, const ModelConfig& model, std::uint64_t seed) {
  const std::size_t max_depth = std::min(model.image.depth, model.text.depth);
  if (cfg.depth_used < 1 || cfg.depth_used > max_depth) {
    throw ConfigError("prompt depth " + std::to_string(cfg.depth_used) + " outside [1, " +
                      std::to_string(max_depth) + "]");
  }
  PromptBank bank;
  bank.cfg_ = cfg;
  bank.image_width_ = model.image.width;
  bank.text_width_ = model.text.width;
  Rng rng(derive_seed(seed, "defense.prompts"));
  const std::size_t P = cfg.prompt_len;
  const bool want_text = cfg.coupling != Coupling::vision_only;
  const bool want_image = cfg.coupling == Coupling::independent || cfg.coupling == Coupling::vision_only;
  for (std::size_t l = 0; l < cfg.depth_used; ++l) {
    if (want_text) bank.textual_.push_back(normal_tensor({P, bank.text_width_}, kPromptInitStd, rng, true));
    if (want_image) bank.visual_.push_back(normal_tensor({P, bank.image_width_}, kPromptInitStd, rng, true));
  }
  if (cfg.coupling == Coupling::joint_mapped) {
    const float std = 1.0f / std::sqrt(static_cast<float>(bank.text_width_));
    bank.map_ = normal_tensor({bank.text_width_, bank.image_width_}, std, rng, true);
  }
  return bank;
}

bool PromptBank::has(Modality m) const {
  if (m == Modality::text) return !textual_.empty();
  return !visual_.empty() || cfg_.coupling == Coupling::joint_mapped;
}

Tensor PromptBank::prompts(Tape& tape, Modality m, std::size_t layer) const {
  if (!has(m) || layer >= cfg_.depth_used) {
    throw ContractError(std::string("no ") + modality_name(m) + " prompts for layer " + std::to_string(layer));
  }
  if (m == Modality::text) return textual_[layer];
  if (cfg_.coupling == Coupling::joint_mapped) {
    if (cfg_.prompt_len == 0) return Tensor::zeros({0, image_width_});
    return ops::matmul(tape, textual_[layer], map_);
  }
  return visual_[layer];
}

ParamList PromptBank::parameters() const {
  ParamList out;
  for (std::size_t l = 0; l < textual_.size(); ++l) out.push_back({"prompts.text." + std::to_string(l), textual_[l]});
  for (std::size_t l = 0; l < visual_.size(); ++l) out.push_back({"prompts.image." + std::to_string(l), visual_[l]});
  if (map_.defined()) out.push_back({"prompts.map", map_});
  return out;
}

PromptBank PromptBank::clone() const {
  PromptBank b = *this;
  for (auto& t : b.textual_) t = t.clone();
  for (auto& t : b.visual_) t = t.clone();
  if (map_.defined()) b.map_ = map_.clone();
  return b;
}

// ---------------------------------------------------------------------------
// TokenRefiner

TokenRefiner::TokenRefiner(std::size_t width, const RefinerConfig& cfg, Rng& rng) : width_(width) {
  if (cfg.depth == 0) throw ConfigError("a token refiner needs at least one layer");
  if (cfg.hidden_mult == 0) throw ConfigError("refiner hidden multiplier must be positive");
  const std::size_t hidden = cfg.depth == 1 ? width : width * cfg.hidden_mult;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t in = i == 0 ? width : hidden;
    const std::size_t out = i + 1 == cfg.depth ? width : hidden;
    if (i + 1 == cfg.depth) {
      weights_.push_back(Tensor::zeros({in, out}, true));
    } else {
      weights_.push_back(normal_tensor({in, out}, 1.0f / std::sqrt(static_cast<float>(in)), rng, true));
    }
    biases_.push_back(Tensor::zeros({out}, true));
  }
}

Tensor TokenRefiner::apply(Tape& tape, const Tensor& z) const {
  if (z.dim(-1) != width_) {
    throw ShapeError("refiner width " + std::to_string(width_) + " does not match tokens " + shape_str(z.shape()));
  }
  Tensor h = z;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = ops::linear(tape, h, weights_[i], biases_[i]);
    if (i + 1 < weights_.size()) h = ops::gelu(tape, h);
  }
  return ops::add(tape, z, h);
}

void TokenRefiner::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({prefix + "." + std::to_string(i) + ".weight", weights_[i]});
    out.push_back({prefix + "." + std::to_string(i) + ".bias", biases_[i]});
  }
}

TokenRefiner TokenRefiner::clone() const {
  TokenRefiner r = *this;
  for (auto& t : r.weights_) t = t.clone();
  for (auto& t : r.biases_) t = t.clone();
  return r;
}

Tensor refine_tokens(Tape& tape, const Tensor& z, const TokenRefiner& refiner) {
  if (z.rank() != 3) throw ShapeError("refine_tokens expects [B, S, W], got " + shape_str(z.shape()));
  return refiner.apply(tape, z);
}

// ---------------------------------------------------------------------------
// Injection

Tensor inject_layer(Tape& tape, const Tensor& h_prev, std::size_t layer, std::size_t& prompt_slots,
                    const PromptBank* bank, const std::vector<TokenRefiner>* refiners, Modality modality,
                    const LayerFn& layer_fn) {
  if (h_prev.rank() != 3) throw ShapeError("inject_layer expects [B, S, W], got " + shape_str(h_prev.shape()));
  const std::size_t seq = h_prev.dim(1);
  if (prompt_slots > seq) {
    throw ContractError("prompt slots " + std::to_string(prompt_slots) + " exceed sequence length " +
                        std::to_string(seq));
  }
  const bool prompted = bank != nullptr && bank->has(modality) && layer < bank->config().depth_used;
  if (!prompted) return layer_fn(tape, h_prev);

  Tensor content = prompt_slots == 0 ? h_prev : ops::slice_tokens(tape, h_prev, prompt_slots, seq - prompt_slots);
  if (refiners != nullptr && layer < refiners->size()) content = refine_tokens(tape, content, (*refiners)[layer]);

  const Tensor v = bank->prompts(tape, modality, layer);
  if (v.dim(1) != h_prev.dim(2)) {
    throw ShapeError("prompt width " + std::to_string(v.dim(1)) + " does not match tokens " +
                     shape_str(h_prev.shape()));
  }
  const std::size_t P = v.dim(0);
  Tensor input = content;
  if (P > 0) input = ops::concat_tokens(tape, ops::broadcast_batch(tape, v, h_prev.dim(0)), content);
  prompt_slots = P;
  Tensor out = layer_fn(tape, input);
  if (out.dim(1) != input.dim(1)) throw ContractError("layer changed the sequence length");
  return out;
}

Tensor PromptView::apply(Tape& tape, const Tensor& h_prev, std::size_t layer, std::size_t& prompt_slots,
                         const LayerFn& layer_fn) const {
  return inject_layer(tape, h_prev, layer, prompt_slots, bank_, refiners_, modality_, layer_fn);
}

// ---------------------------------------------------------------------------
// Defense

std::string to_string(DefenseMode m) {
  switch (m) {
    case DefenseMode::vanilla: return "vanilla";
    case DefenseMode::advpt: return "advpt";
    case DefenseMode::advpt_v: return "advpt_v";
    case DefenseMode::advpt_vli: return "advpt_vli";
    case DefenseMode::advpt_vlj: return "advpt_vlj";
    case DefenseMode::nap: return "nap";
  }
  return "?";
}

const std::vector<DefenseMode>& all_defense_modes() {
  static const std::vector<DefenseMode> modes = {DefenseMode::vanilla,   DefenseMode::advpt,
                                                 DefenseMode::advpt_v,   DefenseMode::advpt_vli,
                                                 DefenseMode::advpt_vlj, DefenseMode::nap};
  return modes;
}

DefenseMode parse_defense_mode(const std::string& s) {
  for (DefenseMode m : all_defense_modes()) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown defense mode '" + s + "'");
}

namespace {

struct ModeLayout {
  bool has_bank = false;
  Coupling coupling = Coupling::independent;
  std::size_t depth = 0;
  bool refiners = false;
};

ModeLayout layout_of(const DefenseConfig& cfg) {
  ModeLayout m;
  switch (cfg.mode) {
    case DefenseMode::vanilla: return m;
    case DefenseMode::advpt: return {true, Coupling::text_only, 1, false};
    case DefenseMode::advpt_v: return {true, Coupling::vision_only, cfg.prompt_layers, false};
    case DefenseMode::advpt_vli: return {true, Coupling::independent, cfg.prompt_layers, false};
    case DefenseMode::advpt_vlj: return {true, Coupling::joint_mapped, cfg.prompt_layers, false};
    case DefenseMode::nap: return {true, Coupling::independent, cfg.prompt_layers, cfg.refiner.depth > 0};
  }
  return m;
}

std::size_t refiner_values(std::size_t width, const RefinerConfig& cfg) {
  if (cfg.depth == 0) return 0;
  const std::size_t hidden = cfg.depth == 1 ? width : width * cfg.hidden_mult;
  std::size_t n = 0;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t in = i == 0 ? width : hidden;
    const std::size_t out = i + 1 == cfg.depth ? width : hidden;
    n += in * out + out;
  }
  return n;
}

}  // namespace

Defense Defense::create(const DefenseConfig& cfg, const ModelConfig& model, std::uint64_t seed) {
  Defense d;
  d.cfg_ = cfg;
  const ModeLayout layout = layout_of(cfg);
  if (!layout.has_bank) return d;
  d.bank_ = PromptBank::init({cfg.prompt_len, layout.depth, layout.coupling}, model, seed);
  if (layout.refiners) {
    Rng rng(derive_seed(seed, "defense.refiners"));
    for (std::size_t l = 0; l < layout.depth; ++l) {
      d.image_refiners_.emplace_back(model.image.width, cfg.refiner, rng);
      d.text_refiners_.emplace_back(model.text.width, cfg.refiner, rng);
    }
  }
  return d;
}

PromptView Defense::view(Modality m) const {
  return PromptView(bank_ ? &*bank_ : nullptr, &refiners(m), m);
}

ParamList Defense::trainable_parameters() const {
  ParamList out;
  if (bank_) out = bank_->parameters();
  for (std::size_t l = 0; l < image_refiners_.size(); ++l) {
    image_refiners_[l].collect("refiner.image." + std::to_string(l), out);
  }
  for (std::size_t l = 0; l < text_refiners_.size(); ++l) {
    text_refiners_[l].collect("refiner.text." + std::to_string(l), out);
  }
  return out;
}

void Defense::load_parameters(const ParamList& params) {
  ParamList mine = trainable_parameters();
  if (mine.size() != params.size()) {
    throw CheckpointError("defense expects " + std::to_string(mine.size()) + " tensors, got " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != params[i].name || mine[i].tensor.shape() != params[i].tensor.shape()) {
      throw CheckpointError("defense tensor mismatch at '" + mine[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    auto dst = mine[i].tensor.data();
    auto src = params[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

Defense Defense::clone() const {
  Defense d = *this;
  if (bank_) d.bank_ = bank_->clone();
  for (auto& r : d.image_refiners_) r = r.clone();
  for (auto& r : d.text_refiners_) r = r.clone();
  return d;
}

std::size_t count_trainable(const DefenseConfig& cfg, const ModelConfig& model) {
  const ModeLayout layout = layout_of(cfg);
  if (!layout.has_bank) return 0;
  const std::size_t P = cfg.prompt_len;
  const std::size_t wi = model.image.width;
  const std::size_t wt = model.text.width;
  std::size_t n = 0;
  switch (layout.coupling) {
    case Coupling::independent: n = layout.depth * P * (wi + wt); break;
    case Coupling::text_only: n = layout.depth * P * wt; break;
    case Coupling::vision_only: n = layout.depth * P * wi; break;
    case Coupling::joint_mapped: n = layout.depth * P * wt + wt * wi; break;
  }
  if (layout.refiners) n += layout.depth * (refiner_values(wi, cfg.refiner) + refiner_values(wt, cfg.refiner));
  return n;
}

Tensor defended_image(Tape& tape, const DualEncoderModel& model, const Defense& defense, const Tensor& images) {
  const PromptView view = defense.view(Modality::image);
  return model.encode_image(tape, images, &view);
}

Tensor defended_text(Tape& tape, const DualEncoderModel& model, const Defense& defense) {
  const PromptView view = defense.view(Modality::text);
  return model.encode_text(tape, model.class_templates(), &view);
}

Tensor defended_logits(Tape& tape, const DualEncoderModel& model, const Defense& defense, const Tensor& images) {
  Tensor img = defended_image(tape, model, defense, images);
  Tensor txt = defended_text(tape, model, defense);
  return class_logits(tape, img, txt, model.config().logit_scale);
}

}  // namespace naptune
