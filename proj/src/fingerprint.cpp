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

#include "naptune/fingerprint.hpp"

#include <openssl/evp.h>

#include <memory>
#include <stdexcept>

#include "naptune/binary_io.hpp"
#include "naptune/errors.hpp"

namespace naptune {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("SHA-256 initialisation failed");
    }
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  Fingerprint finish() {
    Fingerprint fp{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), fp.data(), &len);
    return fp;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

Fingerprint fingerprint_of(std::string_view text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.finish();
}

Fingerprint fingerprint_of(const ParamList& params) {
  binary::Writer w;
  for (const auto& p : params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p.tensor.data()) w.f32(v);
  }
  Sha256 h;
  h.update(w.bytes().data(), w.bytes().size());
  return h.finish();
}

std::string to_hex(const Fingerprint& fp) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (std::uint8_t b : fp) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

Fingerprint fingerprint_from_hex(const std::string& hex) {
  if (hex.size() != 64) throw FormatError("fingerprint must be 64 hex digits");
  auto nibble = [&](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw FormatError("fingerprint has a non-hex digit");
  };
  Fingerprint fp{};
  for (std::size_t i = 0; i < 32; ++i) fp[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return fp;
}

}  // namespace naptune
