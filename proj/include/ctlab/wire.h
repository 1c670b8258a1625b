// Datagram format shared by the timing server and its clients.
//
//   request  = type(1) || plaintext(16) || zero padding up to packet_size
//   response = (type | 0x80)(1) || plaintext(16) || payload
//
// The payload is the 8-byte little-endian cycle count for a timing request
// (0x01) and the 16-byte ciphertext for a ciphertext request (0x02).

#ifndef CTLAB_WIRE_H_
#define CTLAB_WIRE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ctlab/aes_core.h"

namespace ctlab::wire {

enum class MessageType : std::uint8_t {
  kTiming = 0x01,
  kCiphertext = 0x02,
};

inline constexpr std::uint8_t kResponseBit = 0x80;
inline constexpr std::size_t kMinRequestSize = 17;
inline constexpr std::size_t kTimingResponseSize = 1 + 16 + 8;
inline constexpr std::size_t kCiphertextResponseSize = 1 + 16 + 16;

struct Request {
  MessageType type = MessageType::kTiming;
  Block plaintext;
  friend bool operator==(const Request&, const Request&) = default;
};

struct Response {
  MessageType type = MessageType::kTiming;
  Block plaintext;
  std::uint64_t cycles = 0;  // kTiming only
  Block ciphertext;          // kCiphertext only
  friend bool operator==(const Response&, const Response&) = default;
};

// `packet_size` below kMinRequestSize is raised to it.
std::vector<std::uint8_t> encode_request(const Request& request,
                                         std::size_t packet_size);
// nullopt for short datagrams or unknown types. Padding is not inspected.
std::optional<Request> decode_request(std::span<const std::uint8_t> datagram);

std::vector<std::uint8_t> encode_response(const Response& response);
std::optional<Response> decode_response(std::span<const std::uint8_t> datagram);

}  // namespace ctlab::wire

#endif  // CTLAB_WIRE_H_
