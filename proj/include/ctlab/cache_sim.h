// Deterministic set-associative LRU cache model. Converts one encryption's
// table-lookup trace into hit/miss counts and a synthetic cycle total.
//
// Leak model: the cache is flushed before each encryption (configurable).
// A MemoryLayout may also carry an ambient working set: lines owned by the
// request handler that are re-read before every round. A table lookup that
// evicts one of those lines makes the next round pay a miss, so the cost of
// an encryption depends on which sets the first-round indices fall into.

#ifndef CTLAB_CACHE_SIM_H_
#define CTLAB_CACHE_SIM_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ctlab/aes_core.h"
#include "ctlab/countermeasures.h"

namespace ctlab {

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CacheConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CacheConfig {
  std::uint32_t line_size = 64;
  std::uint32_t num_sets = 64;
  std::uint32_t associativity = 4;
  std::uint64_t hit_cycles = 2;
  std::uint64_t miss_cycles = 50;
  bool cold_flush_per_encryption = true;

  std::uint64_t capacity() const {
    return std::uint64_t{line_size} * num_sets * associativity;
  }
  // Throws CacheConfigError on non-power-of-two sizes or zero parameters.
  void validate() const;

  friend bool operator==(const CacheConfig&, const CacheConfig&) = default;
};

// Geometry under which the partitioned bases of Te0..Te3 fall into disjoint
// set ranges: the way size (2 MiB) exceeds the largest of those bases.
CacheConfig partition_cache_config();

// Handler data that is touched before every round.
struct AmbientConfig {
  std::uint32_t lines = 0;
  std::uint64_t seed = 0;
  std::uint64_t region_base = 0x4000000;
  std::uint64_t region_size = 0x10000;

  friend bool operator==(const AmbientConfig&, const AmbientConfig&) = default;
};

inline constexpr std::uint64_t kTableBytes = 4 * 256;

struct MemoryLayout {
  std::array<std::uint64_t, kNumTables> base{};
  std::vector<std::uint64_t> ambient;

  // Tables contiguous from address 0 at 64-byte alignment.
  static MemoryLayout packed(const AmbientConfig& ambient = {});
  // Tables at 0x10, 0x1000, 0x10000, 0x100000, 0x1000000.
  static MemoryLayout partitioned(const AmbientConfig& ambient = {});
  static MemoryLayout of(LayoutKind kind, const AmbientConfig& ambient = {});

  // Throws LayoutError if table regions overlap or an ambient address falls
  // inside a table.
  void validate() const;

  friend bool operator==(const MemoryLayout&, const MemoryLayout&) = default;
};

// Distinct word-aligned addresses in the ambient region, from `cfg.seed`.
std::vector<std::uint64_t> ambient_addresses(const AmbientConfig& cfg);

std::uint64_t element_address(const MemoryLayout& layout, TableId table,
                              std::uint8_t index);

enum class AccessResult { kHit, kMiss };

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t accesses = 0;
};

class CacheState {
 public:
  explicit CacheState(const CacheConfig& config);

  AccessResult access(std::uint64_t address);
  // Empties every set; statistics are kept.
  void flush();

  std::uint32_t set_index(std::uint64_t address) const {
    return static_cast<std::uint32_t>((address >> line_shift_) & set_mask_);
  }
  // Number of valid lines currently held by `set`.
  std::uint32_t occupancy(std::uint32_t set) const;

  const CacheStats& stats() const { return stats_; }
  const CacheConfig& config() const { return config_; }

 private:
  struct Way {
    std::uint64_t line = 0;
    std::uint64_t last_use = 0;
    std::uint64_t epoch = 0;
  };

  CacheConfig config_;
  int line_shift_;
  std::uint64_t set_mask_;
  std::vector<Way> ways_;
  std::uint64_t epoch_ = 1;
  std::uint64_t clock_ = 0;
  CacheStats stats_;
};

struct SimResult {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t cycles = 0;
  friend bool operator==(const SimResult&, const SimResult&) = default;
};

// Replays one encryption. Per trace offset the order is: ambient lines
// (only at round starts, offsets 0, 16, ..., 144), then injected accesses
// for that offset, then the lookup itself. `layout` must already reflect any
// layout_override in `disturbance` (see resolve_layout).
SimResult run_encryption(CacheState& state, const AccessTrace& trace,
                         const MemoryLayout& layout,
                         const DisturbanceReport& disturbance);

const MemoryLayout& resolve_layout(const DisturbanceReport& disturbance,
                                   const MemoryLayout& configured,
                                   const MemoryLayout& partitioned);

}  // namespace ctlab

#endif  // CTLAB_CACHE_SIM_H_
