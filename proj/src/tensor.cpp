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

#include "naptune/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

#include "naptune/errors.hpp"

namespace naptune {

namespace {
std::atomic<bool> g_finite_checks{false};
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad)
    : shape_(std::move(shape)), storage_(std::make_shared<detail::Storage>()) {
  if (shape_numel(shape_) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape_) + " given " +
                     std::to_string(values.size()) + " values");
  }
  storage_->data.assign(values.begin(), values.end());
  storage_->requires_grad = requires_grad;
}

Tensor Tensor::from_buffer(Shape shape, FloatBuffer values, bool requires_grad) {
  Tensor out;
  out.shape_ = std::move(shape);
  out.storage_ = std::make_shared<detail::Storage>();
  out.storage_->data = std::move(values);
  out.storage_->requires_grad = requires_grad;
  return out;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_buffer(std::move(shape), FloatBuffer(n, 0.0f), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_buffer(std::move(shape), FloatBuffer(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

std::size_t Tensor::dim(int axis) const {
  int r = static_cast<int>(shape_.size());
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  }
  return shape_[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return storage_ ? storage_->data.size() : 0; }

std::span<float> Tensor::data() const {
  if (!storage_) return {};
  return {storage_->data.data(), storage_->data.size()};
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return storage_->data[0];
}

bool Tensor::requires_grad() const { return storage_ && storage_->requires_grad; }

void Tensor::set_requires_grad(bool value) const {
  if (!storage_) throw ContractError("set_requires_grad on undefined tensor");
  storage_->requires_grad = value;
}

bool Tensor::has_grad() const { return storage_ && !storage_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return {storage_->grad.data(), storage_->grad.size()};
}

std::span<float> Tensor::grad_buffer() const {
  if (!storage_) throw ContractError("grad_buffer on undefined tensor");
  if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), 0.0f);
  return {storage_->grad.data(), storage_->grad.size()};
}

void Tensor::zero_grad() const {
  if (storage_ && !storage_->grad.empty()) {
    std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0f);
  }
}

void Tensor::drop_grad() const {
  if (storage_) {
    storage_->grad.clear();
    storage_->grad.shrink_to_fit();
  }
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.storage_ = storage_;
  return out;
}

Tensor Tensor::detach() const {
  return from_buffer(shape_, storage_ ? storage_->data : FloatBuffer{}, false);
}

Tensor Tensor::clone() const {
  return from_buffer(shape_, storage_ ? storage_->data : FloatBuffer{}, requires_grad());
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || numel() != other.numel()) return false;
  if (numel() == 0) return true;
  return std::memcmp(storage_->data.data(), other.storage_->data.data(), numel() * sizeof(float)) == 0;
}

void require_finite(const Tensor& t, const char* where) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + where);
  }
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

}  // namespace naptune
