#include "ctlab/hex.h"

#include <stdexcept>

namespace ctlab {
namespace {

int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::array<std::uint8_t, 16> parse_hex16(std::string_view text) {
  if (text.size() != 32) {
    throw std::invalid_argument("expected 32 hex digits, got '" +
                                std::string(text) + "'");
  }
  std::array<std::uint8_t, 16> out;
  for (std::size_t i = 0; i < 16; ++i) {
    const int hi = nibble(text[2 * i]);
    const int lo = nibble(text[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw std::invalid_argument("bad hex digit in '" + std::string(text) +
                                  "'");
    }
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

}  // namespace ctlab
