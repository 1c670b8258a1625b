// The timing server and its measurement client.
//
// EncryptionService is the transport-free request handler: it owns the
// secret key, the countermeasure state and a timing backend. The UDP server
// feeds it datagrams strictly one at a time; experiments can also call it
// in-process.

#ifndef CTLAB_TIMING_CHANNEL_H_
#define CTLAB_TIMING_CHANNEL_H_

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <vector>

#include "ctlab/aes_core.h"
#include "ctlab/cache_sim.h"
#include "ctlab/countermeasures.h"
#include "ctlab/wire.h"

namespace ctlab {

enum class Backend { kNative, kSimulated };
enum class TimingScope { kEncryptOnly, kWholeHandler };

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view name);
std::string_view to_string(TimingScope scope);
TimingScope parse_timing_scope(std::string_view name);

struct SimulationConfig {
  CacheConfig cache;
  LayoutKind layout = LayoutKind::kPacked;
  AmbientConfig ambient;
  CostModel cost;

  friend bool operator==(const SimulationConfig&, const SimulationConfig&) =
      default;
};

struct ChannelConfig {
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;
  std::size_t packet_size = 800;
  TimingScope timing_scope = TimingScope::kEncryptOnly;
  Backend backend = Backend::kSimulated;
  Key128 key;
  CountermeasureKind countermeasure = CountermeasureKind::kNone;
  // Seeds the countermeasure generator; ignored when live_seed is set.
  std::uint64_t seed = 0;
  bool live_seed = false;
  SimulationConfig sim;

  // Throws std::invalid_argument when packet_size < 17.
  void validate() const;

  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

struct TimingSample {
  Block plaintext;
  std::uint64_t cycles = 0;
};

// Serialises a monotonic cycle counter read (TSC on x86, nanoseconds
// elsewhere).
std::uint64_t read_cycle_counter();

struct TimerCalibration {
  std::uint64_t granularity;  // smallest non-zero delta observed
  std::uint64_t overhead;     // smallest back-to-back delta
};
TimerCalibration calibrate_timer(int rounds = 1000);

class TimingBackend {
 public:
  virtual ~TimingBackend() = default;
  // Encrypts `pt` through the countermeasure and reports its cycle cost.
  virtual std::uint64_t timed_encrypt(const Block& pt, Block& ct) = 0;
};

// Trace -> cache_sim cycles. The reported cycles are exactly the SimResult
// cycles of run_encryption.
class SimulatedBackend : public TimingBackend {
 public:
  SimulatedBackend(const Key128& key, CountermeasureKind kind,
                   const SimulationConfig& sim, std::uint64_t seed);

  std::uint64_t timed_encrypt(const Block& pt, Block& ct) override;
  const SimResult& last_result() const { return last_; }

 private:
  RoundKeys rk_;
  CountermeasureKind kind_;
  CountermeasureState state_;
  CostModel cost_;
  Prng prng_;
  CacheState cache_;
  MemoryLayout configured_;
  MemoryLayout partitioned_;
  AccessTrace trace_;
  SimResult last_;
};

class NativeBackend : public TimingBackend {
 public:
  NativeBackend(const Key128& key, CountermeasureKind kind, std::uint64_t seed);
  std::uint64_t timed_encrypt(const Block& pt, Block& ct) override;

 private:
  ProtectedCipher cipher_;
};

std::unique_ptr<TimingBackend> make_backend(const ChannelConfig& config);

class EncryptionService {
 public:
  explicit EncryptionService(const ChannelConfig& config);

  // Handles one datagram; nullopt means "drop, send nothing".
  std::optional<std::vector<std::uint8_t>> handle(
      std::span<const std::uint8_t> datagram);

  TimingSample time_encryption(const Block& pt);
  // Verification oracle; does not advance countermeasure state.
  Block ciphertext(const Block& pt) const;

  const ChannelConfig& config() const { return config_; }
  std::uint64_t dropped() const { return dropped_; }

 private:
  ChannelConfig config_;
  RoundKeys rk_;
  std::unique_ptr<TimingBackend> backend_;
  std::uint64_t dropped_ = 0;
};

class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TimeoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UdpSocket {
 public:
  UdpSocket();
  ~UdpSocket();
  UdpSocket(UdpSocket&& other) noexcept;
  UdpSocket& operator=(UdpSocket&& other) noexcept;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  int fd() const { return fd_; }
  void set_receive_timeout(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
};

// Serial UDP server around an EncryptionService.
class UdpTimingServer {
 public:
  // Binds immediately; throws BindError.
  explicit UdpTimingServer(const ChannelConfig& config);

  std::uint16_t port() const { return port_; }
  // Processes datagrams until `stop` is requested.
  void run(std::stop_token stop);

  std::uint64_t served() const { return served_.load(); }
  std::uint64_t dropped() const { return dropped_.load(); }

 private:
  EncryptionService service_;
  UdpSocket socket_;
  std::uint16_t port_ = 0;
  std::atomic<std::uint64_t> served_{0};
  std::atomic<std::uint64_t> dropped_{0};
};

class TimingClient {
 public:
  TimingClient(const std::string& host, std::uint16_t port,
               std::chrono::milliseconds timeout = std::chrono::milliseconds(
                   500));

  // Throws TimeoutError (retriable) when no matching reply arrives.
  TimingSample measure_once(const Block& pt, std::size_t packet_size = 800);
  Block ciphertext_query(const Block& pt);

  std::uint64_t timeouts() const { return timeouts_; }

 private:
  wire::Response round_trip(wire::MessageType type, const Block& pt,
                            std::size_t packet_size);

  UdpSocket socket_;
  std::chrono::milliseconds timeout_;
  std::uint64_t timeouts_ = 0;
};

}  // namespace ctlab

#endif  // CTLAB_TIMING_CHANNEL_H_
