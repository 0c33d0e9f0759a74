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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "naptune/tensor.hpp"

namespace naptune {

/// In-memory labelled image set, images stored NCHW with values in [0, 1].
struct Dataset {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::string> class_names;
  std::vector<float> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t image_numel() const { return channels * height * width; }

  /// Stacks the selected images into a [n, C, H, W] tensor.
  Tensor images(std::span<const std::size_t> indices) const;
  Tensor all_images() const;
  std::vector<int> labels_of(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;

  /// Throws FormatError on inconsistent sizes or out-of-range labels.
  void validate() const;
  bool operator==(const Dataset& other) const = default;
};

struct SyntheticSpec {
  std::size_t classes = 8;
  std::size_t per_class = 400;       // training images per class
  std::size_t test_per_class = 64;   // test images per class
  std::size_t adapt_per_class = 32;  // held-out pool for few-shot tuning
  std::size_t image_size = 32;
  float noise = 0.08f;               // per-pixel gaussian noise
  float contrast = 0.35f;            // foreground pull away from background
  std::uint64_t seed = 0;
};

struct SyntheticSplits {
  Dataset train;
  Dataset test;
  Dataset adapt;
};

/// Largest class count the procedural renderer supports.
std::size_t max_synthetic_classes();

/// Renders K shape/colour classes with per-image jitter; train, test and
/// adapt use independent random streams derived from the seed.
SyntheticSplits gen_synthetic(const SyntheticSpec& spec);

inline constexpr std::uint32_t kDatasetVersion = 1;

/// NAPD: "NAPD", u32 version, u32 N C H W K, K length-prefixed UTF-8 names,
/// N*C*H*W f32 pixels, N u32 labels. Little-endian throughout.
std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Stratified few-shot subsample: the first `shots` images of every class
/// after a seeded shuffle. Errors if a class has fewer images.
Dataset sample_shots(const Dataset& data, std::size_t shots, std::uint64_t seed);

struct TrainValSplit {
  Dataset train;
  Dataset val;
};

/// Moves floor(fraction * n_c) images of each class c into the val split.
TrainValSplit stratified_split(const Dataset& data, double val_fraction, std::uint64_t seed);

}  // namespace naptune
