#include "ctlab/timing_channel.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <iostream>
#include <limits>

#if defined(__x86_64__) || defined(__i386__)
#include <x86intrin.h>
#endif

namespace ctlab {

std::string_view to_string(Backend backend) {
  return backend == Backend::kNative ? "native" : "simulated";
}

Backend parse_backend(std::string_view name) {
  if (name == "native") return Backend::kNative;
  if (name == "simulated") return Backend::kSimulated;
  throw std::invalid_argument("unknown backend '" + std::string(name) + "'");
}

std::string_view to_string(TimingScope scope) {
  return scope == TimingScope::kEncryptOnly ? "encrypt_only" : "whole_handler";
}

TimingScope parse_timing_scope(std::string_view name) {
  if (name == "encrypt_only") return TimingScope::kEncryptOnly;
  if (name == "whole_handler") return TimingScope::kWholeHandler;
  throw std::invalid_argument("unknown timing scope '" + std::string(name) +
                              "'");
}

void ChannelConfig::validate() const {
  if (packet_size < wire::kMinRequestSize) {
    throw std::invalid_argument("packet_size must be at least 17 bytes");
  }
  if (backend == Backend::kSimulated) sim.cache.validate();
}

std::uint64_t read_cycle_counter() {
#if defined(__x86_64__) || defined(__i386__)
  _mm_lfence();
  const std::uint64_t t = __rdtsc();
  _mm_lfence();
  return t;
#else
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::steady_clock::now().time_since_epoch())
          .count());
#endif
}

TimerCalibration calibrate_timer(int rounds) {
  TimerCalibration cal{std::numeric_limits<std::uint64_t>::max(),
                       std::numeric_limits<std::uint64_t>::max()};
  for (int i = 0; i < rounds; ++i) {
    const std::uint64_t a = read_cycle_counter();
    const std::uint64_t b = read_cycle_counter();
    const std::uint64_t d = b - a;
    cal.overhead = std::min(cal.overhead, d);
    if (d > 0) cal.granularity = std::min(cal.granularity, d);
  }
  if (cal.granularity == std::numeric_limits<std::uint64_t>::max()) {
    cal.granularity = 0;
  }
  return cal;
}

SimulatedBackend::SimulatedBackend(const Key128& key, CountermeasureKind kind,
                                   const SimulationConfig& sim,
                                   std::uint64_t seed)
    : rk_(expand_key(key)),
      kind_(kind),
      state_(initial_state(kind)),
      cost_(sim.cost),
      prng_(seed),
      cache_(sim.cache),
      configured_(MemoryLayout::of(sim.layout, sim.ambient)),
      partitioned_(MemoryLayout::partitioned(sim.ambient)) {
  trace_.reserve(kTraceLength);
}

std::uint64_t SimulatedBackend::timed_encrypt(const Block& pt, Block& ct) {
  trace_.clear();
  ct = encrypt(pt, rk_, TableView::of(default_ttables()), trace_);
  const DisturbanceReport disturbance = apply(kind_, state_, cost_, prng_);
  last_ = run_encryption(cache_, trace_,
                         resolve_layout(disturbance, configured_, partitioned_),
                         disturbance);
  return last_.cycles;
}

NativeBackend::NativeBackend(const Key128& key, CountermeasureKind kind,
                             std::uint64_t seed)
    : cipher_(key, kind, seed) {}

std::uint64_t NativeBackend::timed_encrypt(const Block& pt, Block& ct) {
  const std::uint64_t start = read_cycle_counter();
  ct = cipher_.encrypt(pt);
  const std::uint64_t stop = read_cycle_counter();
  return std::max<std::uint64_t>(stop - start, 1);
}

std::unique_ptr<TimingBackend> make_backend(const ChannelConfig& config) {
  std::uint64_t seed = config.seed;
  if (config.live_seed) {
    seed = static_cast<std::uint64_t>(
        std::chrono::system_clock::now().time_since_epoch().count());
  }
  if (config.backend == Backend::kNative) {
    return std::make_unique<NativeBackend>(config.key, config.countermeasure,
                                           seed);
  }
  return std::make_unique<SimulatedBackend>(config.key, config.countermeasure,
                                            config.sim, seed);
}

EncryptionService::EncryptionService(const ChannelConfig& config)
    : config_(config), rk_(expand_key(config.key)) {
  config_.validate();
  backend_ = make_backend(config_);
}

TimingSample EncryptionService::time_encryption(const Block& pt) {
  Block ct;
  return {pt, backend_->timed_encrypt(pt, ct)};
}

Block EncryptionService::ciphertext(const Block& pt) const {
  return encrypt(pt, rk_, TableView::of(default_ttables()));
}

std::optional<std::vector<std::uint8_t>> EncryptionService::handle(
    std::span<const std::uint8_t> datagram) {
  const bool whole = config_.timing_scope == TimingScope::kWholeHandler &&
                     config_.backend == Backend::kNative;
  const std::uint64_t start = whole ? read_cycle_counter() : 0;

  const auto request = wire::decode_request(datagram);
  if (!request) {
    ++dropped_;
    return std::nullopt;
  }
  // Padding is ignored but still read, as a real handler would checksum or
  // copy it.
  std::uint8_t fold = 0;
  for (std::size_t i = wire::kMinRequestSize; i < datagram.size(); ++i) {
    fold ^= datagram[i];
  }
  volatile std::uint8_t sink = fold;
  static_cast<void>(sink);

  wire::Response response;
  response.type = request->type;
  response.plaintext = request->plaintext;
  if (request->type == wire::MessageType::kCiphertext) {
    response.ciphertext = ciphertext(request->plaintext);
    return wire::encode_response(response);
  }
  Block ct;
  response.cycles = backend_->timed_encrypt(request->plaintext, ct);
  auto bytes = wire::encode_response(response);
  if (whole) {
    response.cycles = std::max<std::uint64_t>(read_cycle_counter() - start, 1);
    bytes = wire::encode_response(response);
  }
  return bytes;
}

UdpSocket::UdpSocket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
  if (fd_ < 0) {
    throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  }
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) ::close(fd_);
}

UdpSocket::UdpSocket(UdpSocket&& other) noexcept : fd_(other.fd_) {
  other.fd_ = -1;
}

UdpSocket& UdpSocket::operator=(UdpSocket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

void UdpSocket::set_receive_timeout(std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

namespace {

sockaddr_in make_address(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw std::invalid_argument("bad IPv4 address '" + host + "'");
  }
  return addr;
}

constexpr std::size_t kMaxDatagram = 65536;

}  // namespace

UdpTimingServer::UdpTimingServer(const ChannelConfig& config)
    : service_(config) {
  sockaddr_in addr = make_address(config.address, config.port);
  if (::bind(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) !=
      0) {
    throw BindError("bind " + config.address + ":" +
                    std::to_string(config.port) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  socket_.set_receive_timeout(std::chrono::milliseconds(100));
}

void UdpTimingServer::run(std::stop_token stop) {
  std::vector<std::uint8_t> buffer(kMaxDatagram);
  while (!stop.stop_requested()) {
    sockaddr_in peer{};
    socklen_t peer_len = sizeof(peer);
    const ssize_t n =
        ::recvfrom(socket_.fd(), buffer.data(), buffer.size(), 0,
                   reinterpret_cast<sockaddr*>(&peer), &peer_len);
    if (n < 0) continue;  // timeout or EINTR: re-check stop
    const auto reply = service_.handle(
        std::span<const std::uint8_t>(buffer.data(), static_cast<std::size_t>(n)));
    if (!reply) {
      ++dropped_;
      std::cerr << "ctlab: dropped malformed datagram (" << n << " bytes)\n";
      continue;
    }
    ::sendto(socket_.fd(), reply->data(), reply->size(), 0,
             reinterpret_cast<sockaddr*>(&peer), peer_len);
    ++served_;
  }
}

TimingClient::TimingClient(const std::string& host, std::uint16_t port,
                           std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  sockaddr_in addr = make_address(host, port);
  if (::connect(socket_.fd(), reinterpret_cast<sockaddr*>(&addr),
                sizeof(addr)) != 0) {
    throw std::runtime_error(std::string("connect: ") + std::strerror(errno));
  }
  socket_.set_receive_timeout(timeout_);
}

wire::Response TimingClient::round_trip(wire::MessageType type,
                                        const Block& pt,
                                        std::size_t packet_size) {
  const auto request = wire::encode_request({type, pt}, packet_size);
  if (::send(socket_.fd(), request.data(), request.size(), 0) < 0) {
    throw std::runtime_error(std::string("send: ") + std::strerror(errno));
  }
  std::array<std::uint8_t, 64> buffer;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (std::chrono::steady_clock::now() < deadline) {
    const ssize_t n = ::recv(socket_.fd(), buffer.data(), buffer.size(), 0);
    if (n < 0) break;
    const auto response = wire::decode_response(std::span<const std::uint8_t>(
        buffer.data(), static_cast<std::size_t>(n)));
    // Late replies to earlier, timed-out requests are skipped.
    if (response && response->type == type && response->plaintext == pt) {
      return *response;
    }
  }
  ++timeouts_;
  throw TimeoutError("no reply from timing server");
}

TimingSample TimingClient::measure_once(const Block& pt,
                                        std::size_t packet_size) {
  const auto r = round_trip(wire::MessageType::kTiming, pt, packet_size);
  return {r.plaintext, r.cycles};
}

Block TimingClient::ciphertext_query(const Block& pt) {
  return round_trip(wire::MessageType::kCiphertext, pt,
                    wire::kMinRequestSize)
      .ciphertext;
}

}  // namespace ctlab
