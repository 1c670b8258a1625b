#include "ctlab/cache_sim.h"

#include <algorithm>
#include <bit>
#include <string>
#include <unordered_set>

namespace ctlab {

void CacheConfig::validate() const {
  if (line_size == 0 || !std::has_single_bit(line_size)) {
    throw CacheConfigError("cache.line_size must be a power of two");
  }
  if (num_sets == 0 || !std::has_single_bit(num_sets)) {
    throw CacheConfigError("cache.sets must be a power of two");
  }
  if (associativity == 0) {
    throw CacheConfigError("cache.assoc must be at least 1");
  }
  if (hit_cycles == 0 || miss_cycles == 0) {
    throw CacheConfigError("cache cycle costs must be positive");
  }
}

CacheConfig partition_cache_config() {
  CacheConfig cfg;
  cfg.line_size = 64;
  cfg.num_sets = 1u << 15;
  cfg.associativity = 2;
  return cfg;
}

std::vector<std::uint64_t> ambient_addresses(const AmbientConfig& cfg) {
  const std::uint64_t words = cfg.region_size / 4;
  if (cfg.lines > words) {
    throw LayoutError("ambient region too small for requested lines");
  }
  Prng prng(cfg.seed);
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::uint64_t> out;
  out.reserve(cfg.lines);
  while (out.size() < cfg.lines) {
    const std::uint64_t addr = cfg.region_base + 4 * (prng() % words);
    if (seen.insert(addr).second) out.push_back(addr);
  }
  return out;
}

MemoryLayout MemoryLayout::packed(const AmbientConfig& ambient) {
  MemoryLayout layout;
  for (std::size_t t = 0; t < kNumTables; ++t) layout.base[t] = t * kTableBytes;
  layout.ambient = ambient_addresses(ambient);
  layout.validate();
  return layout;
}

MemoryLayout MemoryLayout::partitioned(const AmbientConfig& ambient) {
  MemoryLayout layout;
  for (std::size_t t = 0; t < kNumTables; ++t) {
    layout.base[t] = PartitionedTables::kOffsets[t];
  }
  layout.ambient = ambient_addresses(ambient);
  layout.validate();
  return layout;
}

MemoryLayout MemoryLayout::of(LayoutKind kind, const AmbientConfig& ambient) {
  return kind == LayoutKind::kPacked ? packed(ambient) : partitioned(ambient);
}

void MemoryLayout::validate() const {
  for (std::size_t a = 0; a < kNumTables; ++a) {
    for (std::size_t b = a + 1; b < kNumTables; ++b) {
      if (base[a] < base[b] + kTableBytes && base[b] < base[a] + kTableBytes) {
        throw LayoutError("table regions Te" + std::to_string(a) + " and Te" +
                          std::to_string(b) + " overlap");
      }
    }
  }
  for (std::uint64_t addr : ambient) {
    for (std::uint64_t b : base) {
      if (addr >= b && addr < b + kTableBytes) {
        throw LayoutError("ambient address inside a table region");
      }
    }
  }
}

std::uint64_t element_address(const MemoryLayout& layout, TableId table,
                              std::uint8_t index) {
  return layout.base[static_cast<std::size_t>(table)] +
         4 * std::uint64_t{index};
}

CacheState::CacheState(const CacheConfig& config) : config_(config) {
  config_.validate();
  line_shift_ = std::countr_zero(config_.line_size);
  set_mask_ = config_.num_sets - 1;
  ways_.resize(std::size_t{config_.num_sets} * config_.associativity);
}

AccessResult CacheState::access(std::uint64_t address) {
  const std::uint64_t line = address >> line_shift_;
  Way* set = &ways_[(line & set_mask_) * config_.associativity];
  ++clock_;
  ++stats_.accesses;

  Way* victim = nullptr;
  for (std::uint32_t w = 0; w < config_.associativity; ++w) {
    Way& way = set[w];
    if (way.epoch != epoch_) {
      if (victim == nullptr || victim->epoch == epoch_) victim = &way;
      continue;
    }
    if (way.line == line) {
      way.last_use = clock_;
      ++stats_.hits;
      return AccessResult::kHit;
    }
    if (victim == nullptr ||
        (victim->epoch == epoch_ && way.last_use < victim->last_use)) {
      victim = &way;
    }
  }
  *victim = {line, clock_, epoch_};
  ++stats_.misses;
  return AccessResult::kMiss;
}

void CacheState::flush() { ++epoch_; }

std::uint32_t CacheState::occupancy(std::uint32_t set) const {
  const Way* ways = &ways_[std::size_t{set} * config_.associativity];
  return static_cast<std::uint32_t>(
      std::count_if(ways, ways + config_.associativity,
                    [&](const Way& w) { return w.epoch == epoch_; }));
}

SimResult run_encryption(CacheState& state, const AccessTrace& trace,
                         const MemoryLayout& layout,
                         const DisturbanceReport& disturbance) {
  const auto& extra = disturbance.extra_accesses;
  for (std::size_t i = 1; i < extra.size(); ++i) {
    if (extra[i].before < extra[i - 1].before) {
      throw LayoutError("injected accesses must be ordered by offset");
    }
  }
  if (!extra.empty() && extra.back().before > trace.size()) {
    throw LayoutError("injected access beyond end of trace");
  }

  if (state.config().cold_flush_per_encryption) state.flush();
  const CacheStats before = state.stats();

  std::size_t next_extra = 0;
  auto run_point = [&](std::size_t offset) {
    if (offset % 16 == 0 && offset < kTraceLength) {
      for (std::uint64_t addr : layout.ambient) state.access(addr);
    }
    while (next_extra < extra.size() && extra[next_extra].before == offset) {
      const TraceEntry& e = extra[next_extra++].entry;
      state.access(element_address(layout, e.table, e.index));
    }
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    run_point(i);
    state.access(element_address(layout, trace[i].table, trace[i].index));
  }
  run_point(trace.size());

  const CacheConfig& cfg = state.config();
  SimResult result;
  result.hits = state.stats().hits - before.hits;
  result.misses = state.stats().misses - before.misses;
  result.cycles = result.hits * cfg.hit_cycles +
                  result.misses * cfg.miss_cycles + disturbance.extra_cycles;
  return result;
}

const MemoryLayout& resolve_layout(const DisturbanceReport& disturbance,
                                   const MemoryLayout& configured,
                                   const MemoryLayout& partitioned) {
  if (disturbance.layout_override == LayoutKind::kPartitioned) {
    return partitioned;
  }
  return configured;
}

}  // namespace ctlab
