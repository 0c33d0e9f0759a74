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

#include <string>
#include <vector>

#include "naptune/model.hpp"
#include "naptune/rng.hpp"

namespace naptune::testing {

/// Two-layer encoders small enough for exhaustive gradient checks.
inline ModelConfig tiny_model_config(std::size_t depth = 2) {
  ModelConfig m;
  for (EncoderConfig* e : {&m.image, &m.text}) {
    e->depth = depth;
    e->width = 16;
    e->heads = 2;
    e->mlp_ratio = 2;
    e->embed_dim = 8;
    e->image_size = 16;
    e->patch_size = 8;
    e->max_seq = 8;
  }
  return m;
}

inline std::vector<std::string> tiny_classes() { return {"red-circle", "blue-square", "green-triangle"}; }

inline Tensor random_images(std::size_t n, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({n, 3, size, size});
  for (float& v : t.data()) v = rng.uniform(0.05f, 0.95f);
  return t;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, float scale = 1.0f) {
  Rng rng(seed);
  return normal_tensor(std::move(shape), scale, rng);
}

}  // namespace naptune::testing
