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

#include "naptune/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "naptune/binary_io.hpp"
#include "naptune/errors.hpp"
#include "naptune/rng.hpp"

namespace naptune {

Tensor Dataset::images(std::span<const std::size_t> indices) const {
  const std::size_t n = image_numel();
  std::vector<float> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw IndexError("dataset index out of range");
    std::copy_n(pixels.begin() + static_cast<long>(indices[i] * n), n, out.begin() + static_cast<long>(i * n));
  }
  return Tensor({indices.size(), channels, height, width}, std::move(out));
}

Tensor Dataset::all_images() const {
  return Tensor({size(), channels, height, width}, pixels);
}

std::vector<int> Dataset::labels_of(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  d.channels = channels;
  d.height = height;
  d.width = width;
  d.class_names = class_names;
  const std::size_t n = image_numel();
  d.pixels.reserve(indices.size() * n);
  for (auto i : indices) {
    if (i >= size()) throw IndexError("dataset index out of range");
    d.pixels.insert(d.pixels.end(), pixels.begin() + static_cast<long>(i * n),
                    pixels.begin() + static_cast<long>((i + 1) * n));
    d.labels.push_back(labels[i]);
  }
  return d;
}

void Dataset::validate() const {
  if (pixels.size() != size() * image_numel()) throw FormatError("pixel buffer does not match N*C*H*W");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes()) {
      throw FormatError("label " + std::to_string(y) + " outside class table of size " +
                        std::to_string(num_classes()));
    }
  }
}

// --- procedural renderer ----------------------------------------------------

namespace {

struct Colour {
  const char* name;
  std::array<float, 3> rgb;
};

constexpr std::array<const char*, 8> kShapes = {"circle", "square", "triangle", "cross",
                                                "ring",   "diamond", "hbar",   "vbar"};

constexpr std::array<Colour, 8> kColours = {{{"red", {0.85f, 0.25f, 0.25f}},
                                             {"blue", {0.25f, 0.35f, 0.85f}},
                                             {"green", {0.25f, 0.75f, 0.30f}},
                                             {"yellow", {0.85f, 0.80f, 0.25f}},
                                             {"magenta", {0.80f, 0.30f, 0.80f}},
                                             {"cyan", {0.25f, 0.80f, 0.80f}},
                                             {"orange", {0.90f, 0.55f, 0.20f}},
                                             {"purple", {0.50f, 0.30f, 0.70f}}}};

bool inside(std::size_t shape, float u, float v) {
  const float au = std::abs(u), av = std::abs(v);
  switch (shape) {
    case 0: return u * u + v * v <= 1.0f;
    case 1: return std::max(au, av) <= 0.8f;
    case 2: return v >= -0.8f && v <= 0.8f && au <= (v + 0.8f) / 1.6f;
    case 3: return (au <= 0.3f && av <= 0.9f) || (av <= 0.3f && au <= 0.9f);
    case 4: {
      const float r2 = u * u + v * v;
      return r2 <= 1.0f && r2 >= 0.45f;
    }
    case 5: return au + av <= 1.0f;
    case 6: return av <= 0.3f && au <= 1.0f;
    default: return au <= 0.3f && av <= 1.0f;
  }
}

struct ClassLayout {
  std::size_t shapes;
};

ClassLayout layout_for(std::size_t k) {
  // Enough shapes that colours are shared between classes: 8 classes -> 4 shapes x 2 colours.
  std::size_t s = static_cast<std::size_t>(std::ceil(std::sqrt(2.0 * static_cast<double>(k))));
  return {std::clamp<std::size_t>(s, 1, kShapes.size())};
}

void render(Dataset& d, std::size_t cls, std::size_t shapes, float noise, float contrast, Rng& rng) {
  const std::size_t shape = cls % shapes;
  const auto& colour = kColours[cls / shapes].rgb;
  const std::size_t s = d.height;
  const float fs = static_cast<float>(s);
  const float cx = fs * 0.5f + rng.uniform(-fs / 6.0f, fs / 6.0f);
  const float cy = fs * 0.5f + rng.uniform(-fs / 6.0f, fs / 6.0f);
  const float radius = fs * rng.uniform(0.22f, 0.34f);
  const float bg = rng.uniform(0.30f, 0.60f);
  const float gain = rng.uniform(0.85f, 1.15f);
  const std::size_t base = d.pixels.size();
  d.pixels.resize(base + d.image_numel());
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const float u = (static_cast<float>(x) + 0.5f - cx) / radius;
      const float v = (static_cast<float>(y) + 0.5f - cy) / radius;
      const bool fg = inside(shape, u, v);
      for (std::size_t c = 0; c < d.channels; ++c) {
        float val = fg ? bg + contrast * (colour[c] * gain - bg) : bg;
        val += rng.normal(0.0f, noise);
        d.pixels[base + (c * s + y) * s + x] = std::clamp(val, 0.0f, 1.0f);
      }
    }
  }
  d.labels.push_back(static_cast<int>(cls));
}

Dataset render_split(const SyntheticSpec& spec, std::size_t per_class, std::string_view stream) {
  const auto layout = layout_for(spec.classes);
  Dataset d;
  d.channels = 3;
  d.height = d.width = spec.image_size;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    d.class_names.push_back(std::string(kColours[k / layout.shapes].name) + "-" + kShapes[k % layout.shapes]);
  }
  Rng rng(derive_seed(spec.seed, stream));
  d.pixels.reserve(per_class * spec.classes * d.image_numel());
  // Interleave classes so any prefix is roughly balanced.
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t k = 0; k < spec.classes; ++k) render(d, k, layout.shapes, spec.noise, spec.contrast, rng);
  }
  return d;
}

}  // namespace

std::size_t max_synthetic_classes() { return kShapes.size() * kColours.size(); }

SyntheticSplits gen_synthetic(const SyntheticSpec& spec) {
  if (spec.classes == 0) throw ConfigError("gen_synthetic: classes must be positive");
  if (spec.classes > max_synthetic_classes()) {
    throw ConfigError("gen_synthetic: " + std::to_string(spec.classes) + " classes requested, renderer supports " +
                      std::to_string(max_synthetic_classes()));
  }
  const auto layout = layout_for(spec.classes);
  if ((spec.classes + layout.shapes - 1) / layout.shapes > kColours.size()) {
    throw ConfigError("gen_synthetic: class grid exceeds colour palette");
  }
  if (spec.image_size < 8) throw ConfigError("gen_synthetic: image_size must be at least 8");
  if (spec.noise < 0.0f) throw ConfigError("gen_synthetic: noise must be non-negative");
  if (!(spec.contrast > 0.0f && spec.contrast <= 1.0f)) throw ConfigError("gen_synthetic: contrast must be in (0, 1]");
  return {render_split(spec, spec.per_class, "data.train"), render_split(spec, spec.test_per_class, "data.test"),
          render_split(spec, spec.adapt_per_class, "data.adapt")};
}

// --- NAPD format -------------------------------------------------------------

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  data.validate();
  binary::Writer w;
  w.tag("NAPD");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u32(static_cast<std::uint32_t>(data.channels));
  w.u32(static_cast<std::uint32_t>(data.height));
  w.u32(static_cast<std::uint32_t>(data.width));
  w.u32(static_cast<std::uint32_t>(data.num_classes()));
  for (const auto& name : data.class_names) w.str(name);
  for (float v : data.pixels) w.f32(v);
  for (int y : data.labels) w.u32(static_cast<std::uint32_t>(y));
  return std::move(w.bytes());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  binary::Reader<FormatError> r(bytes);
  if (!r.tag("NAPD")) throw FormatError("bad magic: not a NAPD dataset file");
  const auto version = r.u32("version");
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version) + " (expected " +
                      std::to_string(kDatasetVersion) + ")");
  }
  Dataset d;
  const std::uint64_t n = r.u32("N");
  d.channels = r.u32("C");
  d.height = r.u32("H");
  d.width = r.u32("W");
  const std::uint32_t k = r.u32("K");
  for (std::uint32_t i = 0; i < k; ++i) d.class_names.push_back(r.str("class-name table"));
  const std::uint64_t pixel_count = n * d.channels * d.height * d.width;
  const std::uint64_t expected = pixel_count * 4 + n * 4;
  if (r.remaining() != expected) {
    throw FormatError("length mismatch: header promises " + std::to_string(expected) + " payload bytes, file has " +
                      std::to_string(r.remaining()));
  }
  d.pixels.resize(pixel_count);
  for (auto& v : d.pixels) {
    v = r.f32("images");
    if (!(v >= 0.0f && v <= 1.0f)) throw FormatError("images: pixel value outside [0, 1]");
  }
  d.labels.resize(n);
  for (auto& y : d.labels) {
    const auto raw = r.u32("labels");
    if (raw >= k) throw FormatError("labels: label " + std::to_string(raw) + " >= K=" + std::to_string(k));
    y = static_cast<int>(raw);
  }
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  binary::write_file(path, encode_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = binary::read_file(path);
  } catch (const std::runtime_error& e) {
    throw FormatError(e.what());
  }
  return decode_dataset(bytes);
}

// --- sampling ------------------------------------------------------------------

namespace {

std::vector<std::vector<std::size_t>> by_class_shuffled(const Dataset& data, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> groups(data.num_classes());
  for (std::size_t i = 0; i < data.size(); ++i) groups[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::mt19937_64 eng(seed);
  for (auto& g : groups) std::shuffle(g.begin(), g.end(), eng);
  return groups;
}

}  // namespace

Dataset sample_shots(const Dataset& data, std::size_t shots, std::uint64_t seed) {
  if (shots == 0) throw ConfigError("sample_shots: shots must be positive");
  auto groups = by_class_shuffled(data, derive_seed(seed, "shots"));
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].size() < shots) {
      throw ConfigError("sample_shots: class " + data.class_names[c] + " has only " +
                        std::to_string(groups[c].size()) + " images, " + std::to_string(shots) + " requested");
    }
    keep.insert(keep.end(), groups[c].begin(), groups[c].begin() + static_cast<long>(shots));
  }
  std::sort(keep.begin(), keep.end());
  return data.subset(keep);
}

TrainValSplit stratified_split(const Dataset& data, double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("val_fraction must lie in [0, 1)");
  auto groups = by_class_shuffled(data, derive_seed(seed, "val-split"));
  std::vector<std::size_t> train, val;
  for (auto& g : groups) {
    const auto nv = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(g.size())));
    val.insert(val.end(), g.begin(), g.begin() + static_cast<long>(nv));
    train.insert(train.end(), g.begin() + static_cast<long>(nv), g.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {data.subset(train), data.subset(val)};
}

}  // namespace naptune
