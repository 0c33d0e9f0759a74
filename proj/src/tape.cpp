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

#include "naptune/tape.hpp"

#include "naptune/errors.hpp"

namespace naptune {

bool Tape::needs_record(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

void Tape::record(const Tensor& output, BackwardFn fn) {
  output.set_requires_grad(true);
  entries_.push_back({output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward on a loss that is not connected to any gradient-tracking tensor");
  }
  for (auto& e : entries_) e.output.zero_grad();
  loss.grad_buffer()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->fn();
  }
}

NoGradGuard::NoGradGuard(std::vector<Tensor> tensors) : tensors_(std::move(tensors)) {
  saved_.reserve(tensors_.size());
  for (auto& t : tensors_) {
    saved_.push_back(t.requires_grad());
    t.set_requires_grad(false);
  }
}

NoGradGuard::~NoGradGuard() {
  for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].set_requires_grad(saved_[i]);
}

}  // namespace naptune
