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

#include "naptune/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "naptune/errors.hpp"
#include "naptune/ops.hpp"
#include "naptune/optim.hpp"
#include "naptune/rng.hpp"

namespace naptune {

namespace {
constexpr float kInitStd = 0.02f;
}  // namespace

void EncoderConfig::validate_common() const {
  if (depth < 1) throw ConfigError("encoder depth must be at least 1");
  if (width < 1 || heads < 1 || width % heads != 0) {
    throw ConfigError("encoder width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
  }
  if (embed_dim < 1) throw ConfigError("embed_dim must be at least 1");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be at least 1");
}

void EncoderConfig::validate_image() const {
  validate_common();
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (channels == 0) throw ConfigError("channels must be positive");
}

void EncoderConfig::validate_text() const {
  validate_common();
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (max_seq == 0) throw ConfigError("max_seq must be positive");
}

// --- vocabulary ------------------------------------------------------------------

namespace {
const std::vector<std::string> kTemplateWords = {"a", "photo", "of"};
}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> class_names) : class_names_(std::move(class_names)) {
  words_.push_back("<pad>");
  for (const auto& w : kTemplateWords) words_.push_back(w);
  for (const auto& c : class_names_) {
    if (std::find(words_.begin(), words_.end(), c) != words_.end()) {
      throw ConfigError("class name '" + c + "' duplicates a vocabulary word");
    }
    words_.push_back(c);
  }
  for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = static_cast<int>(i);
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw VocabularyError("word '" + word + "' is not in the vocabulary");
  return it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside the vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

int Vocabulary::class_index(const std::string& name) const {
  auto it = std::find(class_names_.begin(), class_names_.end(), name);
  if (it == class_names_.end()) throw VocabularyError("unknown class '" + name + "'");
  return static_cast<int>(it - class_names_.begin());
}

TokenSequence tokenize_template(const Vocabulary& vocab, const std::string& class_name, std::size_t max_seq) {
  TokenSequence seq;
  seq.class_id = vocab.class_index(class_name);
  for (const char* w : {"a", "photo", "of", "a"}) seq.ids.push_back(vocab.id(w));
  seq.ids.push_back(vocab.id(class_name));
  seq.length = seq.ids.size();
  if (seq.length > max_seq) throw ConfigError("template longer than max_seq");
  seq.ids.resize(max_seq, Vocabulary::kPad);
  return seq;
}

// --- transformer -----------------------------------------------------------------

namespace {

LinearParams make_linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true) {
  LinearParams p;
  p.weight = normal_tensor({in, out}, kInitStd, rng);
  if (bias) p.bias = Tensor::zeros({out});
  return p;
}

LayerNormParams make_ln(std::size_t n) { return {Tensor::full({n}, 1.0f), Tensor::zeros({n})}; }

void push_linear(ParamList& out, const std::string& name, const LinearParams& p) {
  out.push_back({name + ".weight", p.weight});
  if (p.bias.defined()) out.push_back({name + ".bias", p.bias});
}

void push_ln(ParamList& out, const std::string& name, const LayerNormParams& p) {
  out.push_back({name + ".gain", p.gain});
  out.push_back({name + ".bias", p.bias});
}

TransformerBlock make_block(const EncoderConfig& cfg, Rng& rng) {
  TransformerBlock b;
  b.heads = cfg.heads;
  b.ln1 = make_ln(cfg.width);
  b.qkv = make_linear(cfg.width, 3 * cfg.width, rng);
  b.proj = make_linear(cfg.width, cfg.width, rng);
  b.ln2 = make_ln(cfg.width);
  b.fc1 = make_linear(cfg.width, cfg.mlp_ratio * cfg.width, rng);
  b.fc2 = make_linear(cfg.mlp_ratio * cfg.width, cfg.width, rng);
  return b;
}

Tensor apply_linear(Tape& tape, const Tensor& x, const LinearParams& p) {
  return ops::linear(tape, x, p.weight, p.bias);
}

Tensor apply_ln(Tape& tape, const Tensor& x, const LayerNormParams& p) {
  return ops::layer_norm(tape, x, p.gain, p.bias);
}

}  // namespace

Tensor TransformerBlock::forward(Tape& tape, const Tensor& h, bool causal) const {
  Tensor a = ops::attention(tape, apply_linear(tape, apply_ln(tape, h, ln1), qkv), heads, causal);
  Tensor h1 = ops::add(tape, h, apply_linear(tape, a, proj));
  Tensor m = apply_linear(tape, ops::gelu(tape, apply_linear(tape, apply_ln(tape, h1, ln2), fc1)), fc2);
  return ops::add(tape, h1, m);
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out) const {
  push_ln(out, prefix + ".ln1", ln1);
  push_linear(out, prefix + ".attn.qkv", qkv);
  push_linear(out, prefix + ".attn.proj", proj);
  push_ln(out, prefix + ".ln2", ln2);
  push_linear(out, prefix + ".mlp.fc1", fc1);
  push_linear(out, prefix + ".mlp.fc2", fc2);
}

// --- image encoder ----------------------------------------------------------------

ImageEncoder::ImageEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate_image();
  Rng rng(seed);
  patch_embed_ = make_linear(cfg.channels * cfg.patch_size * cfg.patch_size, cfg.width, rng);
  class_token_ = normal_tensor({1, cfg.width}, kInitStd, rng);
  positions_ = normal_tensor({1 + cfg.num_patches(), cfg.width}, kInitStd, rng);
  for (std::size_t l = 0; l < cfg.depth; ++l) blocks_.push_back(make_block(cfg, rng));
  ln_post_ = make_ln(cfg.width);
  projection_ = normal_tensor({cfg.width, cfg.embed_dim}, 1.0f / std::sqrt(static_cast<float>(cfg.width)), rng);
  pixel_offset_ = Tensor::full({cfg.num_patches(), cfg.channels * cfg.patch_size * cfg.patch_size},
                               -kPixelMean * kPixelScale);
}

Tensor ImageEncoder::forward(Tape& tape, const Tensor& images, const LayerHook* hook) const {
  if (images.rank() != 4 || images.dim(1) != cfg_.channels || images.dim(2) != cfg_.image_size ||
      images.dim(3) != cfg_.image_size) {
    throw ShapeError("encode_image: expected [B, " + std::to_string(cfg_.channels) + ", " +
                     std::to_string(cfg_.image_size) + ", " + std::to_string(cfg_.image_size) + "], got " +
                     shape_str(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  Tensor raw = ops::patchify(tape, images, cfg_.patch_size);
  Tensor centred = ops::add_broadcast(tape, ops::scale(tape, raw, kPixelScale), pixel_offset_);
  Tensor patches = apply_linear(tape, centred, patch_embed_);
  Tensor h = ops::concat_tokens(tape, ops::broadcast_batch(tape, class_token_, batch), patches);
  h = ops::add_broadcast(tape, h, positions_);
  std::size_t slots = 0;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const TransformerBlock& block = blocks_[l];
    LayerFn fn = [&block](Tape& t, const Tensor& x) { return block.forward(t, x, false); };
    h = hook ? hook->apply(tape, h, l, slots, fn) : fn(tape, h);
  }
  std::vector<std::size_t> readout(batch, slots);
  Tensor cls = ops::gather_tokens(tape, h, readout);
  cls = apply_ln(tape, cls, ln_post_);
  return ops::l2_normalize(tape, ops::matmul(tape, cls, projection_));
}

void ImageEncoder::collect(ParamList& out) const {
  push_linear(out, "image.patch_embed", patch_embed_);
  out.push_back({"image.class_token", class_token_});
  out.push_back({"image.positions", positions_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect("image.blocks." + std::to_string(l), out);
  push_ln(out, "image.ln_post", ln_post_);
  out.push_back({"image.projection", projection_});
}

// --- text encoder -----------------------------------------------------------------

TextEncoder::TextEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate_text();
  Rng rng(seed);
  token_embed_ = normal_tensor({cfg.vocab_size, cfg.width}, kInitStd, rng);
  positions_ = normal_tensor({cfg.max_seq, cfg.width}, kInitStd, rng);
  for (std::size_t l = 0; l < cfg.depth; ++l) blocks_.push_back(make_block(cfg, rng));
  ln_final_ = make_ln(cfg.width);
  projection_ = normal_tensor({cfg.width, cfg.embed_dim}, 1.0f / std::sqrt(static_cast<float>(cfg.width)), rng);
}

Tensor TextEncoder::forward(Tape& tape, std::span<const TokenSequence> seqs, const LayerHook* hook) const {
  if (seqs.empty()) throw ShapeError("encode_text: empty batch");
  std::vector<int> ids;
  ids.reserve(seqs.size() * cfg_.max_seq);
  for (const auto& s : seqs) {
    if (s.ids.size() != cfg_.max_seq || s.length == 0 || s.length > cfg_.max_seq) {
      throw ShapeError("encode_text: sequence must be padded to max_seq " + std::to_string(cfg_.max_seq));
    }
    for (int id : s.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
        throw VocabularyError("encode_text: token id " + std::to_string(id) + " outside vocabulary");
      }
    }
    ids.insert(ids.end(), s.ids.begin(), s.ids.end());
  }
  const std::size_t k = seqs.size();
  Tensor h = ops::embedding(tape, token_embed_, ids).reshape({k, cfg_.max_seq, cfg_.width});
  h = ops::add_broadcast(tape, h, positions_);
  std::size_t slots = 0;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const TransformerBlock& block = blocks_[l];
    LayerFn fn = [&block](Tape& t, const Tensor& x) { return block.forward(t, x, true); };
    h = hook ? hook->apply(tape, h, l, slots, fn) : fn(tape, h);
  }
  std::vector<std::size_t> readout;
  readout.reserve(k);
  for (const auto& s : seqs) readout.push_back(slots + s.length - 1);
  Tensor eot = apply_ln(tape, ops::gather_tokens(tape, h, readout), ln_final_);
  return ops::l2_normalize(tape, ops::matmul(tape, eot, projection_));
}

void TextEncoder::collect(ParamList& out) const {
  out.push_back({"text.token_embed", token_embed_});
  out.push_back({"text.positions", positions_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect("text.blocks." + std::to_string(l), out);
  push_ln(out, "text.ln_final", ln_final_);
  out.push_back({"text.projection", projection_});
}

// --- dual encoder -----------------------------------------------------------------

DualEncoderModel::DualEncoderModel(ModelConfig cfg, std::vector<std::string> class_names, std::uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(std::move(class_names)) {
  if (!(cfg_.logit_scale > 0.0f)) throw ConfigError("logit_scale must be positive");
  if (vocab_.class_names().empty()) throw ConfigError("model needs at least one class");
  cfg_.text.vocab_size = vocab_.size();
  if (cfg_.image.embed_dim != cfg_.text.embed_dim) throw ConfigError("image and text embed_dim differ");
  image_ = ImageEncoder(cfg_.image, derive_seed(seed, "init.image"));
  text_ = TextEncoder(cfg_.text, derive_seed(seed, "init.text"));
  for (const auto& c : vocab_.class_names()) templates_.push_back(tokenize_template(vocab_, c, cfg_.text.max_seq));
  set_frozen(false);
}

Tensor DualEncoderModel::encode_image(Tape& tape, const Tensor& images, const LayerHook* hook) const {
  return image_.forward(tape, images, hook);
}

Tensor DualEncoderModel::encode_text(Tape& tape, std::span<const TokenSequence> seqs, const LayerHook* hook) const {
  return text_.forward(tape, seqs, hook);
}

ParamList DualEncoderModel::parameters() const {
  ParamList out;
  image_.collect(out);
  text_.collect(out);
  return out;
}

void DualEncoderModel::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : parameters()) {
    p.tensor.set_requires_grad(!frozen);
    p.tensor.drop_grad();
  }
}

void DualEncoderModel::load_parameters(const ParamList& params) {
  ParamList own = parameters();
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& p : params) by_name[p.name] = &p.tensor;
  for (auto& p : own) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("missing backbone parameter " + p.name);
    if (it->second->shape() != p.tensor.shape()) {
      throw CheckpointError("parameter " + p.name + " has shape " + shape_str(it->second->shape()) +
                            ", model expects " + shape_str(p.tensor.shape()));
    }
    std::copy(it->second->data().begin(), it->second->data().end(), p.tensor.data().begin());
  }
}

// --- scoring ------------------------------------------------------------------------

Tensor similarity(Tape& tape, const Tensor& img, const Tensor& txt) {
  if (img.rank() != 2 || txt.rank() != 2 || img.dim(1) != txt.dim(1)) {
    throw ShapeError("similarity: " + shape_str(img.shape()) + " vs " + shape_str(txt.shape()));
  }
  return ops::scaled_cosine(tape, img, txt, 1.0f);
}

Tensor class_logits(Tape& tape, const Tensor& img, const Tensor& txt, float logit_scale) {
  return ops::scaled_cosine(tape, img, txt, logit_scale);
}

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(1) == 0) throw ShapeError("argmax_rows: expected non-empty [B, K]");
  const std::size_t b = scores.dim(0), k = scores.dim(1);
  auto s = scores.data();
  std::vector<int> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (s[i * k + j] > s[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> classify(const Tensor& img_emb, const Tensor& txt_emb, float logit_scale) {
  if (!(logit_scale > 0.0f)) throw ConfigError("classify: logit_scale must be positive");
  Tape off(false);
  return argmax_rows(class_logits(off, img_emb, txt_emb, logit_scale));
}

// --- pretraining --------------------------------------------------------------------

double clean_accuracy(const DualEncoderModel& model, const Dataset& data, std::size_t batch) {
  if (data.size() == 0) throw ConfigError("clean_accuracy: empty dataset");
  Tape off(false);
  Tensor txt = model.encode_text(off, model.class_templates());
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t n = std::min(batch, data.size() - start);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    auto pred = classify(model.encode_image(off, data.images(idx)), txt, model.config().logit_scale);
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == data.labels[start + i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

PretrainResult pretrain_backbone(DualEncoderModel& model, const Dataset& data, const PretrainConfig& cfg,
                                 const std::function<void(const PretrainEpoch&)>& on_epoch) {
  if (data.size() == 0) throw ConfigError("pretrain_backbone: empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("pretrain_backbone: batch_size must be positive");
  PretrainResult result;
  if (cfg.epochs == 0) {
    model.set_frozen(true);
    return result;
  }
  model.set_frozen(false);
  ParamList params = model.parameters();
  OptimizerState state = make_optimizer_state(params);
  AdamWConfig opt;
  opt.weight_decay = cfg.weight_decay;
  const std::size_t steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = steps_per_epoch * cfg.epochs;
  // Linear warmup, then cosine decay.
  const std::size_t warmup = std::min<std::size_t>(total / 10, 200);
  std::mt19937_64 shuffle(derive_seed(cfg.seed, "pretrain.shuffle"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    float lr = 0.0f;
    for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, data.size() - start);
      std::span<const std::size_t> idx(order.data() + start, n);
      auto labels = data.labels_of(idx);
      Tape tape;
      Tensor txt = model.encode_text(tape, model.class_templates());
      Tensor img = model.encode_image(tape, data.images(idx));
      Tensor logits = class_logits(tape, img, txt, model.config().logit_scale);
      Tensor loss = ops::cross_entropy(tape, logits, labels);
      if (!std::isfinite(loss.item())) {
        throw NumericError("pretrain_backbone: non-finite loss at epoch " + std::to_string(epoch));
      }
      zero_grads(params);
      tape.backward(loss);
      if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
      lr = step < warmup ? cfg.lr * static_cast<float>(step + 1) / static_cast<float>(warmup)
                         : cosine_lr(step - warmup, total - warmup, cfg.lr);
      adamw_step(params, state, lr, opt);
      ++step;
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(n);
      auto pred = argmax_rows(logits);
      for (std::size_t i = 0; i < n; ++i) correct += pred[i] == labels[i];
    }
    PretrainEpoch rec{epoch, loss_sum / static_cast<double>(data.size()),
                      static_cast<double>(correct) / static_cast<double>(data.size()), lr};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  zero_grads(params);
  model.set_frozen(true);
  result.final_accuracy = clean_accuracy(model, data);
  result.reached_floor = result.final_accuracy >= cfg.accuracy_floor;
  if (!result.reached_floor) {
    result.warning = "backbone reached clean accuracy " + std::to_string(result.final_accuracy) +
                     " below the floor " + std::to_string(cfg.accuracy_floor);
  }
  return result;
}

}  // namespace naptune
