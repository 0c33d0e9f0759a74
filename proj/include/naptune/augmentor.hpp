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
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "naptune/model.hpp"
#include "naptune/params.hpp"
#include "naptune/rng.hpp"
#include "naptune/tape.hpp"
#include "naptune/tensor.hpp"

namespace naptune {

enum class Modality { image, text };

/// How visual and textual prompts relate.
enum class Coupling { independent, joint_mapped, text_only, vision_only };

std::string to_string(Coupling c);
Coupling parse_coupling(const std::string& s);

struct PromptConfig {
  std::size_t prompt_len = 4;   // tokens per prompted layer
  std::size_t depth_used = 12;  // layers 0 .. depth_used-1 receive fresh prompts
  Coupling coupling = Coupling::independent;
};

/// Learnable prompt vectors for every prompted layer of each active modality.
///
/// Joint-mapped banks store only textual prompts and derive visual ones
/// through a single shared linear map (visual = textual · map).
class PromptBank {
 public:
  PromptBank() = default;
  static PromptBank init(const PromptConfig& cfg, const ModelConfig& model, std::uint64_t seed);

  const PromptConfig& config() const { return cfg_; }
  bool has(Modality m) const;
  std::size_t width(Modality m) const { return m == Modality::image ? image_width_ : text_width_; }
  /// Prompt matrix [P, width] for `layer` (< depth_used).
  Tensor prompts(Tape& tape, Modality m, std::size_t layer) const;
  ParamList parameters() const;
  PromptBank clone() const;

 private:
  PromptConfig cfg_;
  std::size_t image_width_ = 0;
  std::size_t text_width_ = 0;
  std::vector<Tensor> visual_;
  std::vector<Tensor> textual_;
  Tensor map_;  // [text_width, image_width], joint_mapped only
};

struct RefinerConfig {
  std::size_t depth = 2;        // linear layers; 0 disables refinement
  std::size_t hidden_mult = 2;  // hidden width = hidden_mult * token width
};

/// Residual per-token correction z + MLP(z). The MLP's last layer starts at
/// zero, so a fresh refiner is exactly the identity.
class TokenRefiner {
 public:
  TokenRefiner() = default;
  TokenRefiner(std::size_t width, const RefinerConfig& cfg, Rng& rng);

  std::size_t width() const { return width_; }
  std::size_t depth() const { return weights_.size(); }
  Tensor apply(Tape& tape, const Tensor& z) const;
  void collect(const std::string& prefix, ParamList& out) const;
  TokenRefiner clone() const;

  /// Raw layer access for inspection and tests.
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }

 private:
  std::size_t width_ = 0;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Refines every token of z[B, S, width]; ShapeError on width mismatch.
Tensor refine_tokens(Tape& tape, const Tensor& z, const TokenRefiner& refiner);

/// Implements one prompted layer step:
///   content  = h_prev without its leading `prompt_slots` tokens
///   content  = R(content)            (when refiners are given)
///   layer in = [V(layer); content]   (fresh prompts broadcast over batch)
/// Layers at or beyond depth_used run `layer_fn` on h_prev unchanged, so
/// earlier prompts propagate and no refinement happens.
Tensor inject_layer(Tape& tape, const Tensor& h_prev, std::size_t layer, std::size_t& prompt_slots,
                    const PromptBank* bank, const std::vector<TokenRefiner>* refiners, Modality modality,
                    const LayerFn& layer_fn);

/// Read handle onto one modality's prompts and refiners for a forward pass.
/// Must not outlive the bank and refiners it points at.
class PromptView final : public LayerHook {
 public:
  PromptView(const PromptBank* bank, const std::vector<TokenRefiner>* refiners, Modality modality)
      : bank_(bank), refiners_(refiners), modality_(modality) {}

  Tensor apply(Tape& tape, const Tensor& h_prev, std::size_t layer, std::size_t& prompt_slots,
               const LayerFn& layer_fn) const override;

 private:
  const PromptBank* bank_;
  const std::vector<TokenRefiner>* refiners_;
  Modality modality_;
};

enum class DefenseMode { vanilla, advpt, advpt_v, advpt_vli, advpt_vlj, nap };

std::string to_string(DefenseMode m);
DefenseMode parse_defense_mode(const std::string& s);
const std::vector<DefenseMode>& all_defense_modes();

struct DefenseConfig {
  DefenseMode mode = DefenseMode::nap;
  std::size_t prompt_len = 4;
  std::size_t prompt_layers = 12;
  RefinerConfig refiner;
};

/// Prompt bank plus per-layer refiners: the trainable part of a tuned model.
///
/// Mode mapping: vanilla has nothing; advpt is text-only prompts on the first
/// layer; advpt_v vision-only; advpt_vli independent prompts on both sides;
/// advpt_vlj joint-mapped prompts; nap independent prompts plus refiners.
class Defense {
 public:
  Defense() = default;
  static Defense create(const DefenseConfig& cfg, const ModelConfig& model, std::uint64_t seed);

  const DefenseConfig& config() const { return cfg_; }
  DefenseMode mode() const { return cfg_.mode; }
  const std::optional<PromptBank>& bank() const { return bank_; }
  const std::vector<TokenRefiner>& refiners(Modality m) const {
    return m == Modality::image ? image_refiners_ : text_refiners_;
  }

  PromptView view(Modality m) const;
  /// Exactly the prompt vectors, coupling map and refiner weights.
  ParamList trainable_parameters() const;
  /// Copies values by name; CheckpointError on mismatch.
  void load_parameters(const ParamList& params);
  Defense clone() const;

 private:
  DefenseConfig cfg_;
  std::optional<PromptBank> bank_;
  std::vector<TokenRefiner> image_refiners_;
  std::vector<TokenRefiner> text_refiners_;
};

/// Total number of trainable values for a configuration, computed from the
/// shapes alone.
std::size_t count_trainable(const DefenseConfig& cfg, const ModelConfig& model);

/// Image embeddings through the defended path.
Tensor defended_image(Tape& tape, const DualEncoderModel& model, const Defense& defense, const Tensor& images);
/// Class-template text embeddings through the defended path.
Tensor defended_text(Tape& tape, const DualEncoderModel& model, const Defense& defense);
/// logit_scale * cosine(image, class texts).
Tensor defended_logits(Tape& tape, const DualEncoderModel& model, const Defense& defense, const Tensor& images);

}  // namespace naptune
