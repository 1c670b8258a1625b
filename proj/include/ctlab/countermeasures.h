// Countermeasures against first-round cache-timing leakage. Each strategy has
// two faces: ProtectedCipher runs the real disturbance code around a native
// encryption, and apply() describes the same disturbance to the cache
// simulator as extra cycles, extra table accesses, or a layout switch.
// Neither face ever changes the ciphertext.

#ifndef CTLAB_COUNTERMEASURES_H_
#define CTLAB_COUNTERMEASURES_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "ctlab/aes_core.h"

namespace ctlab {

enum class CountermeasureKind {
  kNone,
  kRandomLoop,
  kSpecifiedLoop,
  kPrefetch,
  kCachePartition,
};

inline constexpr std::array<CountermeasureKind, 5> kAllCountermeasures = {
    CountermeasureKind::kNone, CountermeasureKind::kRandomLoop,
    CountermeasureKind::kSpecifiedLoop, CountermeasureKind::kPrefetch,
    CountermeasureKind::kCachePartition};

std::string_view to_string(CountermeasureKind kind);
// Accepts none|random_loop|specified_loop|prefetch|cache_partition.
CountermeasureKind parse_countermeasure(std::string_view name);

enum class LayoutKind { kPacked, kPartitioned };

std::string_view to_string(LayoutKind kind);
LayoutKind parse_layout(std::string_view name);

struct CostModel {
  std::uint64_t rng_cycles = 3800;
  std::uint64_t loop_iter_cycles = 7;
  std::uint64_t div_cycles = 20;

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

using Prng = std::mt19937_64;

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct SpecifiedLoopState {
  static constexpr int kInitial = 1777;
  static constexpr int kDivisor = 17;
  static constexpr int kResetThreshold = 6;

  int gen = kInitial;
};

// 16-wide window over the four main tables; advances by 16 and wraps at 256.
struct PrefetchState {
  static constexpr int kWidth = 16;
  int window_start = 0;
};

struct PrefetchWindow {
  int start;
  int end() const { return start + PrefetchState::kWidth; }
  // Te0[i], Te1[i], Te2[i], Te3[i] for each i in the window, in copy order.
  std::array<TraceEntry, 4 * PrefetchState::kWidth> accesses() const;
};

// An extra table access that the simulator interleaves into the trace,
// immediately before the lookup at trace offset `before`.
struct InjectedAccess {
  std::size_t before;
  TraceEntry entry;
  friend bool operator==(const InjectedAccess&, const InjectedAccess&) =
      default;
};

struct DisturbanceReport {
  std::uint64_t extra_cycles = 0;
  std::vector<InjectedAccess> extra_accesses;
  std::optional<LayoutKind> layout_override;

  bool empty() const {
    return extra_cycles == 0 && extra_accesses.empty() && !layout_override;
  }
};

struct NoState {};
using CountermeasureState =
    std::variant<NoState, SpecifiedLoopState, PrefetchState>;

CountermeasureState initial_state(CountermeasureKind kind);

// n in [0, 20).
int random_loop_next(Prng& prng);

// Returns the loop count for this encryption: the new gen, or 0 on reset.
int specified_loop_next(SpecifiedLoopState& state);

PrefetchWindow prefetch_next(PrefetchState& state);

// Cycle cost of the loop countermeasures for a given iteration count.
std::uint64_t random_loop_cycles(int iterations, const CostModel& cost);
std::uint64_t specified_loop_cycles(int iterations, const CostModel& cost);

// Trace offsets where the round loop starts an iteration (rounds 1, 3, 5,
// 7, 9): the prefetch injection points.
std::array<std::size_t, kRounds / 2> round_loop_offsets();

// Advances `state` by one encryption. Throws ContractViolation when `state`
// does not hold the alternative `kind` needs.
DisturbanceReport apply(CountermeasureKind kind, CountermeasureState& state,
                        const CostModel& cost, Prng& prng);

// The five tables placed at 0x10, 0x1000, 0x10000, 0x100000 and 0x1000000
// byte offsets inside a 16 MiB-aligned region, so each table start carries
// the matching alignment.
class PartitionedTables {
 public:
  static constexpr std::array<std::size_t, kNumTables> kOffsets = {
      0x10, 0x1000, 0x10000, 0x100000, 0x1000000};

  explicit PartitionedTables(const TTableSet& source);
  ~PartitionedTables();
  PartitionedTables(const PartitionedTables&) = delete;
  PartitionedTables& operator=(const PartitionedTables&) = delete;

  const TableView& view() const { return view_; }

 private:
  std::byte* region_ = nullptr;
  TableView view_{};
};

// Native-mode cipher: runs the selected disturbance code for real before
// (and, for prefetch, inside) each encryption.
class ProtectedCipher {
 public:
  ProtectedCipher(const Key128& key, CountermeasureKind kind,
                  std::uint64_t seed);

  Block encrypt(const Block& pt);
  CountermeasureKind kind() const { return kind_; }

 private:
  RoundKeys rk_;
  CountermeasureKind kind_;
  CountermeasureState state_;
  Prng prng_;
  std::unique_ptr<PartitionedTables> partitioned_;
  TableView tables_;
};

}  // namespace ctlab

#endif  // CTLAB_COUNTERMEASURES_H_
