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
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace naptune {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Allocator with cache-line alignment, so vectorised kernels see the same
/// head/tail split for a given length on every run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

namespace detail {

struct Storage {
  FloatBuffer data;
  FloatBuffer grad;  // empty until the first accumulation
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major float tensor.
///
/// A Tensor is a handle: copies alias the same buffer, which is what lets an
/// operation recorded on a Tape write gradients back into its inputs.
/// `reshape` returns another alias (data and grad are shared), `clone` and
/// `detach` make independent copies.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  /// Dimension `axis`; negative values count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<float> data() const;
  float item() const;
  float at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value) const;

  bool has_grad() const;
  /// Gradient buffer; throws ContractError when none has been accumulated.
  std::span<const float> grad() const;
  /// Gradient buffer, zero-allocated on first use.
  std::span<float> grad_buffer() const;
  void zero_grad() const;
  void drop_grad() const;

  Tensor reshape(Shape shape) const;
  /// Independent copy of the values, without gradient tracking.
  Tensor detach() const;
  /// Independent copy preserving requires_grad (but not the grad buffer).
  Tensor clone() const;

  bool shares_storage(const Tensor& other) const { return storage_ == other.storage_; }
  bool bit_equal(const Tensor& other) const;

 private:
  static Tensor from_buffer(Shape shape, FloatBuffer values, bool requires_grad);

  Shape shape_;
  std::shared_ptr<detail::Storage> storage_;

  friend class Tape;
};

/// Throws NumericError naming `where` if any value is NaN or infinite.
void require_finite(const Tensor& t, const char* where);

/// Process-wide toggle for per-operation NaN/Inf checks (off by default).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace naptune
