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
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "naptune/dataset.hpp"
#include "naptune/params.hpp"
#include "naptune/tape.hpp"
#include "naptune/tensor.hpp"

namespace naptune {

struct EncoderConfig {
  std::size_t depth = 12;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t embed_dim = 64;
  // Image side.
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t patch_size = 8;
  // Text side.
  std::size_t vocab_size = 0;
  std::size_t max_seq = 16;

  /// Throws ConfigError when the architecture is inconsistent.
  void validate_common() const;
  void validate_image() const;
  void validate_text() const;
  std::size_t num_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
};

struct ModelConfig {
  EncoderConfig image;
  EncoderConfig text;
  float logit_scale = 100.0f;
};

/// Closed word-level vocabulary: padding, the template words, then class names.
class Vocabulary {
 public:
  static constexpr int kPad = 0;

  explicit Vocabulary(std::vector<std::string> class_names);

  int id(const std::string& word) const;
  const std::string& word(int id) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  /// Index of `name` in the class table; VocabularyError if unknown.
  int class_index(const std::string& name) const;

 private:
  std::vector<std::string> words_;
  std::vector<std::string> class_names_;
  std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
  std::vector<int> ids;    // padded to max_seq with Vocabulary::kPad
  std::size_t length = 0;  // number of non-pad tokens
  int class_id = -1;
};

/// "a photo of a <class>" over the closed vocabulary, padded to `max_seq`.
TokenSequence tokenize_template(const Vocabulary& vocab, const std::string& class_name, std::size_t max_seq);

using LayerFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Replaces the bare per-layer call inside an encoder. `prompt_slots` is the
/// number of leading prompt tokens currently in `h_prev`; implementations
/// update it to the count present in the returned sequence.
class LayerHook {
 public:
  virtual ~LayerHook() = default;
  virtual Tensor apply(Tape& tape, const Tensor& h_prev, std::size_t layer, std::size_t& prompt_slots,
                       const LayerFn& layer_fn) const = 0;
};

struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], may be undefined
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

/// Pre-norm transformer block: h + Attn(LN(h)), then + MLP(LN(.)).
struct TransformerBlock {
  LayerNormParams ln1;
  LinearParams qkv;
  LinearParams proj;
  LayerNormParams ln2;
  LinearParams fc1;
  LinearParams fc2;
  std::size_t heads = 1;

  Tensor forward(Tape& tape, const Tensor& h, bool causal) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

class ImageEncoder {
 public:
  static constexpr float kPixelMean = 0.5f;
  static constexpr float kPixelScale = 4.0f;

  ImageEncoder() = default;
  ImageEncoder(const EncoderConfig& cfg, std::uint64_t seed);

  /// images [B, C, H, W] -> unit-norm [B, embed_dim].
  Tensor forward(Tape& tape, const Tensor& images, const LayerHook* hook) const;
  void collect(ParamList& out) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  LinearParams patch_embed_;
  Tensor class_token_;  // [1, width]
  Tensor positions_;    // [1 + patches, width]
  std::vector<TransformerBlock> blocks_;
  LayerNormParams ln_post_;
  Tensor projection_;  // [width, embed_dim]
  Tensor pixel_offset_;  // constant; maps pixels to (x - mean) * scale
};

class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const EncoderConfig& cfg, std::uint64_t seed);

  /// Causal transformer over padded sequences; reads out the last real token.
  Tensor forward(Tape& tape, std::span<const TokenSequence> seqs, const LayerHook* hook) const;
  void collect(ParamList& out) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  Tensor token_embed_;  // [vocab, width]
  Tensor positions_;    // [max_seq, width]
  std::vector<TransformerBlock> blocks_;
  LayerNormParams ln_final_;
  Tensor projection_;
};

/// CLIP-style dual encoder with a fixed logit scale.
class DualEncoderModel {
 public:
  DualEncoderModel(ModelConfig cfg, std::vector<std::string> class_names, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t num_classes() const { return vocab_.class_names().size(); }

  Tensor encode_image(Tape& tape, const Tensor& images, const LayerHook* hook = nullptr) const;
  Tensor encode_text(Tape& tape, std::span<const TokenSequence> seqs, const LayerHook* hook = nullptr) const;
  /// Hand-crafted template for every class, in class order.
  const std::vector<TokenSequence>& class_templates() const { return templates_; }

  /// Backbone parameters in a fixed order with stable names.
  ParamList parameters() const;
  bool frozen() const { return frozen_; }
  /// Frozen backbones never track gradients.
  void set_frozen(bool frozen);
  /// Copies values from `params` by name; CheckpointError on any mismatch.
  void load_parameters(const ParamList& params);

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  ImageEncoder image_;
  TextEncoder text_;
  std::vector<TokenSequence> templates_;
  bool frozen_ = false;
};

/// Cosine similarity of every image row against every text row: [B, K].
Tensor similarity(Tape& tape, const Tensor& img, const Tensor& txt);
/// logit_scale * similarity.
Tensor class_logits(Tape& tape, const Tensor& img, const Tensor& txt, float logit_scale);
/// Argmax over classes of logit_scale * similarity; ties go to the lowest index.
std::vector<int> classify(const Tensor& img_emb, const Tensor& txt_emb, float logit_scale);
std::vector<int> argmax_rows(const Tensor& scores);

struct PretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  float lr = 1e-3f;
  float weight_decay = 1e-4f;
  double accuracy_floor = 0.9;
  double grad_clip = 1.0;  // 0 disables
  std::uint64_t seed = 0;
};

struct PretrainEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  std::vector<PretrainEpoch> history;
  double final_accuracy = 0.0;
  bool reached_floor = false;
  std::string warning;
};

/// Trains the whole backbone for `cfg.epochs` with cross-entropy over
/// image-vs-class-template logits, then freezes it. Ending below the accuracy
/// floor is reported as a warning, not thrown.
PretrainResult pretrain_backbone(DualEncoderModel& model, const Dataset& data, const PretrainConfig& cfg,
                                 const std::function<void(const PretrainEpoch&)>& on_epoch = {});

/// Accuracy of the plain backbone on `data`.
double clean_accuracy(const DualEncoderModel& model, const Dataset& data, std::size_t batch = 128);

}  // namespace naptune
