// Small text helpers for the CSV formats.

#ifndef CTLAB_TEXT_H_
#define CTLAB_TEXT_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ctlab {

// Shortest representation that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

std::string format_u128(unsigned __int128 value);
unsigned __int128 parse_u128(std::string_view text);
std::uint64_t parse_u64(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view text);

}  // namespace ctlab

#endif  // CTLAB_TEXT_H_
