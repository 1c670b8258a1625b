#ifndef CTLAB_HEX_H_
#define CTLAB_HEX_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "ctlab/aes_core.h"

namespace ctlab {

std::string to_hex(std::span<const std::uint8_t> bytes);
inline std::string to_hex(const Block& b) { return to_hex(b.bytes); }
inline std::string to_hex(const Key128& k) { return to_hex(k.bytes); }

// Throws std::invalid_argument unless `text` is exactly 32 hex digits.
std::array<std::uint8_t, 16> parse_hex16(std::string_view text);
inline Block parse_block(std::string_view text) { return {parse_hex16(text)}; }
inline Key128 parse_key(std::string_view text) { return {parse_hex16(text)}; }

}  // namespace ctlab

#endif  // CTLAB_HEX_H_
