#include "cesim/bytes.hpp"

namespace cesim {

namespace {
constexpr char kHexChars[] = "0123456789abcdef";

int hex_val(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw std::runtime_error("invalid hex character");
}
}  // namespace

std::string Digest::hex() const {
  std::string out(64, '0');
  for (size_t i = 0; i < 32; ++i) {
    out[2 * i] = kHexChars[bytes[i] >> 4];
    out[2 * i + 1] = kHexChars[bytes[i] & 0xf];
  }
  return out;
}

Digest Digest::from_hex(const std::string& s) {
  if (s.size() != 64) throw std::runtime_error("digest hex must be 64 chars");
  Digest d;
  for (size_t i = 0; i < 32; ++i)
    d.bytes[i] = static_cast<uint8_t>((hex_val(s[2 * i]) << 4) | hex_val(s[2 * i + 1]));
  return d;
}

}  // namespace cesim
