#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cesim {

// 32-byte digest used for block hashes, signatures, VRF proofs and tx ids.
struct Digest {
  std::array<uint8_t, 32> bytes{};

  auto operator<=>(const Digest&) const = default;

  bool is_zero() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }

  // First 8 bytes read as a big-endian integer; used for threshold tests.
  uint64_t prefix_u64() const {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[static_cast<size_t>(i)];
    return v;
  }

  std::string hex() const;
  static Digest from_hex(const std::string& s);
};

// The reserved "null block" marker. An all-zero digest is rejected as a real
// block hash everywhere, so pointer fields can use it as a cheap null.
inline const Digest kNullDigest{};

struct DigestHash {
  size_t operator()(const Digest& d) const {
    uint64_t v;
    std::memcpy(&v, d.bytes.data(), sizeof(v));
    return static_cast<size_t>(v);
  }
};

// Canonical byte encoding: every field is emitted as a 4-byte little-endian
// length followed by the field bytes, in declaration order. Integers are
// 8-byte little-endian payloads. This is the byte stream all hashes and
// signatures are computed over, so traces stay bit-reproducible.
class Encoder {
 public:
  void put_bytes(std::span<const uint8_t> b) {
    put_len(static_cast<uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  void put_digest(const Digest& d) { put_bytes(std::span(d.bytes)); }
  void put_u64(uint64_t v) {
    std::array<uint8_t, 8> raw;
    for (int i = 0; i < 8; ++i) raw[static_cast<size_t>(i)] = static_cast<uint8_t>(v >> (8 * i));
    put_bytes(raw);
  }
  void put_str(std::string_view s) {
    put_bytes(std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
  }

  const std::vector<uint8_t>& bytes() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  void put_len(uint32_t n) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(n >> (8 * i)));
  }
  std::vector<uint8_t> buf_;
};

class Decoder {
 public:
  explicit Decoder(std::span<const uint8_t> data) : data_(data) {}

  std::span<const uint8_t> get_bytes() {
    uint32_t n = get_len();
    if (pos_ + n > data_.size()) throw std::runtime_error("decode: truncated field");
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  Digest get_digest() {
    auto b = get_bytes();
    if (b.size() != 32) throw std::runtime_error("decode: digest must be 32 bytes");
    Digest d;
    std::memcpy(d.bytes.data(), b.data(), 32);
    return d;
  }
  uint64_t get_u64() {
    auto b = get_bytes();
    if (b.size() != 8) throw std::runtime_error("decode: u64 must be 8 bytes");
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<size_t>(i)];
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  uint32_t get_len() {
    if (pos_ + 4 > data_.size()) throw std::runtime_error("decode: truncated length");
    uint32_t n = 0;
    for (int i = 3; i >= 0; --i) n = (n << 8) | data_[pos_ + static_cast<size_t>(i)];
    pos_ += 4;
    return n;
  }
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

// FNV-1a over a running stream; used for trace event digests (not security).
struct Fnv64 {
  uint64_t state = 0xcbf29ce484222325ull;
  void feed(std::string_view s) {
    for (char c : s) {
      state ^= static_cast<uint8_t>(c);
      state *= 0x100000001b3ull;
    }
  }
};

}  // namespace cesim
