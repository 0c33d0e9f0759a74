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

#include "naptune/checkpoint.hpp"

#include <set>

#include "naptune/binary_io.hpp"
#include "naptune/errors.hpp"

namespace naptune {

namespace {

constexpr std::uint32_t kMaxRank = 8;

}  // namespace

ParamList Checkpoint::with_prefix(const std::string& prefix) const {
  ParamList out;
  for (const auto& p : params) {
    if (p.name.rfind(prefix, 0) == 0) out.push_back({p.name.substr(prefix.size()), p.tensor});
  }
  return out;
}

ParamList prefixed(const ParamList& params, const std::string& prefix) {
  ParamList out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({prefix + p.name, p.tensor});
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::set<std::string> names;
  for (const auto& p : ckpt.params) {
    if (!names.insert(p.name).second) throw CheckpointError("duplicate parameter name '" + p.name + "'");
  }
  binary::Writer w;
  w.tag("NAPC");
  w.u32(kCheckpointVersion);
  w.raw(ckpt.fingerprint);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p.tensor.data()) w.f32(v);
  }
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  binary::Reader<CheckpointError> r(bytes);
  if (!r.tag("NAPC")) throw CheckpointError("bad magic: not a checkpoint file");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  auto fp = r.raw(32, "fingerprint");
  std::copy(fp.begin(), fp.end(), ckpt.fingerprint.begin());
  const std::uint32_t count = r.u32("parameter count");
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("parameter name");
    if (!names.insert(name).second) throw CheckpointError("duplicate parameter name '" + name + "'");
    const std::uint32_t rank = r.u32("rank");
    if (rank > kMaxRank) throw CheckpointError("parameter '" + name + "' has implausible rank");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u32("dims"));
      numel *= shape.back();
    }
    if (numel > r.remaining() / 4) throw CheckpointError("truncated data for parameter '" + name + "'");
    std::vector<float> values(numel);
    for (float& v : values) v = r.f32("data");
    ckpt.params.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after parameter table");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  binary::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<Fingerprint>& expected,
                           bool force) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = binary::read_file(path);
  } catch (const std::exception& e) {
    throw CheckpointError(e.what());
  }
  Checkpoint ckpt = decode_checkpoint(bytes);
  if (expected && *expected != ckpt.fingerprint && !force) {
    throw CheckpointError("checkpoint fingerprint " + to_hex(ckpt.fingerprint) + " does not match config " +
                          to_hex(*expected));
  }
  return ckpt;
}

}  // namespace naptune
