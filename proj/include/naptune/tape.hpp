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
#include <functional>
#include <initializer_list>
#include <vector>

#include "naptune/tensor.hpp"

namespace naptune {

/// Define-by-run record of primitive operations for reverse-mode AD.
///
/// Operations are appended in execution order, so replaying the record
/// backwards is a valid reverse topological order. An operation is recorded
/// only when the tape is enabled and at least one input requires a gradient;
/// everything else runs as plain forward arithmetic.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  explicit Tape(bool enabled = true) : enabled_(enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool enabled() const { return enabled_; }
  void set_enabled(bool enabled) { enabled_ = enabled; }

  /// True when an op over `inputs` must be recorded.
  bool needs_record(std::initializer_list<const Tensor*> inputs) const;

  /// Marks `output` as a differentiable intermediate and stores its backward rule.
  void record(const Tensor& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, newest first.
  /// Intermediate gradients are reset on entry; leaf gradients accumulate
  /// across calls until the caller zeroes them.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool enabled_;
};

/// Clears requires_grad on a set of tensors for the guard's lifetime.
class NoGradGuard {
 public:
  explicit NoGradGuard(std::vector<Tensor> tensors);
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  std::vector<Tensor> tensors_;
  std::vector<bool> saved_;
};

}  // namespace naptune
