#include "ctlab/wire.h"

#include <algorithm>

namespace ctlab::wire {
namespace {

bool known_type(std::uint8_t t) {
  return t == static_cast<std::uint8_t>(MessageType::kTiming) ||
         t == static_cast<std::uint8_t>(MessageType::kCiphertext);
}

Block read_block(std::span<const std::uint8_t> bytes) {
  Block b;
  std::copy_n(bytes.begin(), 16, b.bytes.begin());
  return b;
}

}  // namespace

std::vector<std::uint8_t> encode_request(const Request& request,
                                         std::size_t packet_size) {
  std::vector<std::uint8_t> out(std::max(packet_size, kMinRequestSize), 0);
  out[0] = static_cast<std::uint8_t>(request.type);
  std::copy(request.plaintext.bytes.begin(), request.plaintext.bytes.end(),
            out.begin() + 1);
  return out;
}

std::optional<Request> decode_request(std::span<const std::uint8_t> datagram) {
  if (datagram.size() < kMinRequestSize || !known_type(datagram[0])) {
    return std::nullopt;
  }
  return Request{static_cast<MessageType>(datagram[0]),
                 read_block(datagram.subspan(1, 16))};
}

std::vector<std::uint8_t> encode_response(const Response& response) {
  std::vector<std::uint8_t> out;
  out.reserve(kCiphertextResponseSize);
  out.push_back(static_cast<std::uint8_t>(response.type) | kResponseBit);
  out.insert(out.end(), response.plaintext.bytes.begin(),
             response.plaintext.bytes.end());
  if (response.type == MessageType::kTiming) {
    for (int i = 0; i < 8; ++i) {
      out.push_back(static_cast<std::uint8_t>(response.cycles >> (8 * i)));
    }
  } else {
    out.insert(out.end(), response.ciphertext.bytes.begin(),
               response.ciphertext.bytes.end());
  }
  return out;
}

std::optional<Response> decode_response(
    std::span<const std::uint8_t> datagram) {
  if (datagram.empty() || !(datagram[0] & kResponseBit) ||
      !known_type(datagram[0] & ~kResponseBit)) {
    return std::nullopt;
  }
  Response r;
  r.type = static_cast<MessageType>(datagram[0] & ~kResponseBit);
  const std::size_t want = r.type == MessageType::kTiming
                               ? kTimingResponseSize
                               : kCiphertextResponseSize;
  if (datagram.size() != want) return std::nullopt;
  r.plaintext = read_block(datagram.subspan(1, 16));
  if (r.type == MessageType::kTiming) {
    for (int i = 0; i < 8; ++i) {
      r.cycles |= std::uint64_t{datagram[17 + i]} << (8 * i);
    }
  } else {
    r.ciphertext = read_block(datagram.subspan(17, 16));
  }
  return r;
}

}  // namespace ctlab::wire
