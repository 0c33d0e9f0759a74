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
#include <span>
#include <vector>

#include "naptune/tape.hpp"
#include "naptune/tensor.hpp"

/// Differentiable primitives. Every function records its backward rule on
/// `tape` when the tape is enabled and some input requires a gradient.
namespace naptune::ops {

inline constexpr float kLayerNormEps = 1e-5f;

// Arithmetic.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, float factor);
/// x[..., S, W] + y[S, W], broadcasting y over the leading dimensions.
Tensor add_broadcast(Tape& tape, const Tensor& x, const Tensor& y);
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

// Linear algebra.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
/// x[..., in] · weight[in, out] (+ bias[out]); leading dimensions are rows.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

// Nonlinearities and normalization.
Tensor gelu(Tape& tape, const Tensor& x);
Tensor softmax(Tape& tape, const Tensor& x, int axis);
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = kLayerNormEps);
/// Divides every row (last axis) by its L2 norm. Zero rows are a NumericError.
Tensor l2_normalize(Tape& tape, const Tensor& x);
/// scale * cos(a_i, b_j) for a: [B, D], b: [K, D]; evaluated in double.
Tensor scaled_cosine(Tape& tape, const Tensor& a, const Tensor& b, float scale);

// Losses.
/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);
/// Mean over rows of KL(softmax(p_logits) || softmax(q_logits)).
Tensor kl_softmax(Tape& tape, const Tensor& p_logits, const Tensor& q_logits);

// Sequence plumbing for [B, S, W] token tensors.
/// Multi-head self-attention over packed qkv[B, S, 3W] -> [B, S, W].
Tensor attention(Tape& tape, const Tensor& qkv, std::size_t heads, bool causal);
Tensor concat_tokens(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_tokens(Tape& tape, const Tensor& x, std::size_t start, std::size_t count);
/// Row `index[b]` of every sequence b: [B, S, W] -> [B, W].
Tensor gather_tokens(Tape& tape, const Tensor& x, std::span<const std::size_t> index);
/// v[P, W] -> [B, P, W].
Tensor broadcast_batch(Tape& tape, const Tensor& v, std::size_t batch);
/// table[V, W] rows picked by ids -> [ids.size(), W].
Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids);
/// images[B, C, H, W] -> [B, (H/p)(W/p), C*p*p], patches in raster order.
Tensor patchify(Tape& tape, const Tensor& images, std::size_t patch);

}  // namespace naptune::ops
