#include "ctlab/cache_sim.h"

#include <algorithm>
#include <random>
#include <set>

#include "ctlab/hex.h"
#include "doctest.h"
#include "oracle/recency_lru.h"

using namespace ctlab;

namespace {

CacheConfig geometry(std::uint32_t line, std::uint32_t sets, std::uint32_t assoc) {
  CacheConfig cfg;
  cfg.line_size = line;
  cfg.num_sets = sets;
  cfg.associativity = assoc;
  return cfg;
}

AccessTrace random_trace(std::mt19937_64& rng, Key128& key, Block& pt) {
  for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng());
  for (auto& b : pt.bytes) b = static_cast<std::uint8_t>(rng());
  AccessTrace trace;
  encrypt(pt, expand_key(key), TableView::of(default_ttables()), trace);
  return trace;
}

std::size_t distinct_lines(const AccessTrace& trace, const MemoryLayout& layout,
                           std::uint32_t line_size) {
  std::set<std::uint64_t> lines;
  for (const TraceEntry& e : trace) {
    lines.insert(element_address(layout, e.table, e.index) / line_size);
  }
  return lines.size();
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(CacheConfig{}.validate());
  CHECK(CacheConfig{}.capacity() == 16384);
  CHECK_THROWS_AS(geometry(48, 64, 4).validate(), CacheConfigError);
  CHECK_THROWS_AS(geometry(64, 0, 4).validate(), CacheConfigError);
  CHECK_THROWS_AS(geometry(64, 64, 0).validate(), CacheConfigError);
  CHECK_THROWS_AS(CacheState(geometry(64, 96, 1)), CacheConfigError);
}

TEST_CASE("access examples") {
  SUBCASE("miss then hit") {
    CacheState cache(CacheConfig{});
    CHECK(cache.access(0x1234) == AccessResult::kMiss);
    CHECK(cache.access(0x1234) == AccessResult::kHit);
    CHECK(cache.access(0x1200) == AccessResult::kHit);  // same 64-byte line
  }
  SUBCASE("direct-mapped conflict") {
    CacheState cache(geometry(64, 64, 1));
    const std::uint64_t a = 0x40;
    const std::uint64_t b = a + 64 * 64;
    REQUIRE(cache.set_index(a) == cache.set_index(b));
    for (int i = 0; i < 20; ++i) {
      CHECK(cache.access(a) == AccessResult::kMiss);
      CHECK(cache.access(b) == AccessResult::kMiss);
    }
  }
  SUBCASE("two-way LRU thrash over three lines") {
    CacheState cache(geometry(64, 64, 2));
    const std::uint64_t stride = 64 * 64;
    for (int i = 0; i < 30; ++i) {
      CHECK(cache.access((i % 3) * stride) == AccessResult::kMiss);
    }
    CHECK(cache.occupancy(0) == 2);
  }
  SUBCASE("set index") {
    CacheState cache(CacheConfig{});
    CHECK(cache.set_index(0) == 0);
    CHECK(cache.set_index(64) == 1);
    CHECK(cache.set_index(64 * 64) == 0);
    CHECK(cache.set_index(64 * 65 + 63) == 1);
  }
}

TEST_CASE("flush") {
  CacheState cache(CacheConfig{});
  cache.access(0x80);
  cache.access(0x80);
  const CacheStats before = cache.stats();
  cache.flush();
  CHECK(cache.stats().hits == before.hits);
  CHECK(cache.stats().misses == before.misses);
  CHECK(cache.occupancy(cache.set_index(0x80)) == 0);
  cache.flush();
  CHECK(cache.occupancy(cache.set_index(0x80)) == 0);
  CHECK(cache.access(0x80) == AccessResult::kMiss);
  CHECK(cache.stats().hits + cache.stats().misses == cache.stats().accesses);
}

constexpr int kOracleLength = 12;

std::uint64_t oracle_mismatches(const CacheConfig& cfg,
                                const std::array<std::uint64_t, 4>& addr,
                                const std::vector<std::array<int, kOracleLength>>& traces) {
  CacheState cache(cfg);
  oracle::RecencyLru oracle(cfg.line_size, cfg.num_sets, cfg.associativity);
  std::uint64_t mismatches = 0;
  // Each trace checks all of its prefixes as well.
  for (const auto& trace : traces) {
    cache.flush();
    oracle.clear();
    for (int label : trace) {
      const bool hit = cache.access(addr[label]) == AccessResult::kHit;
      if (hit != oracle.access(addr[label])) ++mismatches;
    }
  }
  return mismatches;
}

// Label sequences in first-occurrence order (restricted growth strings).
void canonical_traces(std::array<int, kOracleLength>& cur, int pos, int max_label,
                      std::vector<std::array<int, kOracleLength>>& out) {
  if (pos == kOracleLength) {
    out.push_back(cur);
    return;
  }
  for (int l = 0; l <= std::min(max_label + 1, 3); ++l) {
    cur[pos] = l;
    canonical_traces(cur, pos + 1, std::max(max_label, l), out);
  }
}

TEST_CASE("LRU matches the recency-list oracle on every short trace") {
  SUBCASE("four addresses in one set") {
    // All addresses share a set, so relabeling them cannot change hit/miss
    // outcomes and the canonical traces stand for every trace.
    std::vector<std::array<int, kOracleLength>> traces;
    std::array<int, kOracleLength> cur{};
    canonical_traces(cur, 0, -1, traces);
    CHECK(traces.size() == 1 + 2047 + 86526 + 611501);
    for (std::uint32_t assoc = 1; assoc <= 4; ++assoc) {
      CHECK(oracle_mismatches(geometry(16, 4, assoc), {0x00, 0x40, 0x80, 0xc0},
                              traces) == 0);
    }
  }
  SUBCASE("two sets, every labelled trace") {
    std::vector<std::array<int, kOracleLength>> traces;
    traces.reserve(1u << (2 * kOracleLength));
    for (std::uint32_t code = 0; code < (1u << (2 * kOracleLength)); ++code) {
      std::array<int, kOracleLength> t;
      for (int i = 0; i < kOracleLength; ++i) t[i] = (code >> (2 * i)) & 3;
      traces.push_back(t);
    }
    CHECK(oracle_mismatches(geometry(16, 2, 2), {0x00, 0x10, 0x20, 0x30},
                            traces) == 0);
  }
}

TEST_CASE("occupancy never exceeds associativity") {
  CacheState cache(geometry(64, 8, 3));
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    cache.access(rng() % 65536);
    for (std::uint32_t s = 0; s < 8; ++s) REQUIRE(cache.occupancy(s) <= 3);
  }
}

TEST_CASE("more sets or ways never add misses") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint64_t> trace(300);
    for (auto& a : trace) a = (rng() % 96) * 16;
    auto misses = [&](const CacheConfig& cfg) {
      CacheState cache(cfg);
      for (std::uint64_t a : trace) cache.access(a);
      return cache.stats().misses;
    };
    const auto base = misses(geometry(16, 4, 2));
    CHECK(misses(geometry(16, 4, 3)) <= base);
    CHECK(misses(geometry(16, 8, 2)) <= base);
    CHECK(misses(geometry(16, 8, 4)) <= misses(geometry(16, 8, 2)));
  }
}

TEST_CASE("element_address") {
  const MemoryLayout packed = MemoryLayout::packed();
  CHECK(element_address(packed, TableId::kTe0, 0) == packed.base[0]);
  CHECK(element_address(packed, TableId::kTe2, 255) == 2 * 1024 + 1020);
  CacheState cache(CacheConfig{});
  CHECK(cache.set_index(element_address(packed, TableId::kTe0, 16)) ==
        cache.set_index(packed.base[0]) + 1);
  CHECK(cache.set_index(element_address(packed, TableId::kTe0, 15)) ==
        cache.set_index(packed.base[0]));
}

TEST_CASE("layouts") {
  const MemoryLayout part = MemoryLayout::partitioned();
  CHECK(part.base == std::array<std::uint64_t, 5>{0x10, 0x1000, 0x10000,
                                                   0x100000, 0x1000000});
  CHECK_NOTHROW(part.validate());
  MemoryLayout bad = MemoryLayout::packed();
  bad.base[1] = 512;
  CHECK_THROWS_AS(bad.validate(), LayoutError);

  AmbientConfig amb;
  amb.lines = 24;
  amb.seed = 7;
  const auto addrs = ambient_addresses(amb);
  CHECK(addrs.size() == 24);
  CHECK(std::set<std::uint64_t>(addrs.begin(), addrs.end()).size() == 24);
  CHECK(addrs == ambient_addresses(amb));
  for (auto a : addrs) {
    CHECK(a % 4 == 0);
    CHECK(a >= amb.region_base);
    CHECK(a < amb.region_base + amb.region_size);
  }
}

TEST_CASE("partitioned Te0..Te3 occupy disjoint set ranges") {
  const CacheConfig cfg = partition_cache_config();
  const CacheState cache(cfg);
  const MemoryLayout part = MemoryLayout::partitioned();
  std::array<std::set<std::uint32_t>, 4> sets;
  for (int t = 0; t < 4; ++t) {
    for (int i = 0; i < 256; ++i) {
      sets[t].insert(cache.set_index(
          element_address(part, static_cast<TableId>(t), static_cast<std::uint8_t>(i))));
    }
  }
  // Hand-computed: (base / 64) mod 2^15 for each base.
  CHECK(*sets[0].begin() == 0);
  CHECK(*sets[0].rbegin() == 16);
  CHECK(*sets[1].begin() == 64);
  CHECK(*sets[2].begin() == 1024);
  CHECK(*sets[3].begin() == 16384);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      std::vector<std::uint32_t> common;
      std::set_intersection(sets[a].begin(), sets[a].end(), sets[b].begin(),
                            sets[b].end(), std::back_inserter(common));
      CHECK(common.empty());
    }
  }
}

TEST_CASE("cold run misses equal the distinct-line count") {
  std::mt19937_64 rng(2024);
  struct Setup {
    CacheConfig cfg;
    MemoryLayout layout;
  };
  const std::array<Setup, 3> setups = {
      Setup{CacheConfig{}, MemoryLayout::packed()},
      Setup{geometry(4, 1024, 1), MemoryLayout::packed()},
      Setup{partition_cache_config(), MemoryLayout::partitioned()}};
  for (const Setup& s : setups) {
    CacheState cache(s.cfg);
    for (int i = 0; i < 100; ++i) {
      Key128 key;
      Block pt;
      const AccessTrace trace = random_trace(rng, key, pt);
      const SimResult r = run_encryption(cache, trace, s.layout, {});
      CHECK(r.misses == distinct_lines(trace, s.layout, s.cfg.line_size));
      CHECK(r.hits + r.misses == kTraceLength);
      CHECK(r.cycles == r.hits * 2 + r.misses * 50);
    }
  }
}

TEST_CASE("warm rerun has no misses when everything fits") {
  CacheConfig cfg;
  cfg.cold_flush_per_encryption = false;
  CacheState cache(cfg);
  std::mt19937_64 rng(9);
  Key128 key;
  Block pt;
  const AccessTrace trace = random_trace(rng, key, pt);
  const MemoryLayout layout = MemoryLayout::packed();
  run_encryption(cache, trace, layout, {});
  CHECK(run_encryption(cache, trace, layout, {}).misses == 0);
}

TEST_CASE("extra cycles are additive and results deterministic") {
  std::mt19937_64 rng(4);
  Key128 key;
  Block pt;
  const AccessTrace trace = random_trace(rng, key, pt);
  AmbientConfig amb;
  amb.lines = 24;
  amb.seed = 7;
  const MemoryLayout layout = MemoryLayout::packed(amb);
  CacheState a(geometry(4, 1024, 1));
  CacheState b(geometry(4, 1024, 1));
  DisturbanceReport loop;
  loop.extra_cycles = 3940;
  const SimResult plain = run_encryption(a, trace, layout, {});
  const SimResult slow = run_encryption(b, trace, layout, loop);
  CHECK(slow.cycles == plain.cycles + 3940);
  CHECK(slow.hits == plain.hits);
  CHECK(run_encryption(a, trace, layout, {}) == plain);
  // Ambient lines are read once per round.
  CHECK(plain.hits + plain.misses == kTraceLength + 10 * 24);
}

TEST_CASE("injected accesses") {
  std::mt19937_64 rng(8);
  Key128 key;
  Block pt;
  const AccessTrace trace = random_trace(rng, key, pt);
  const MemoryLayout layout = MemoryLayout::packed();
  CacheState cache(CacheConfig{});

  PrefetchState pf;
  DisturbanceReport d;
  for (std::size_t off : round_loop_offsets()) {
    for (const TraceEntry& e : prefetch_next(pf).accesses()) {
      d.extra_accesses.push_back({off, e});
    }
  }
  const SimResult r = run_encryption(cache, trace, layout, d);
  CHECK(r.hits + r.misses == kTraceLength + 320);

  DisturbanceReport unordered;
  unordered.extra_accesses = {{10, {TableId::kTe0, 0}}, {5, {TableId::kTe0, 0}}};
  CHECK_THROWS_AS(run_encryption(cache, trace, layout, unordered), LayoutError);
  DisturbanceReport late;
  late.extra_accesses = {{kTraceLength + 1, {TableId::kTe0, 0}}};
  CHECK_THROWS_AS(run_encryption(cache, trace, layout, late), LayoutError);
}

TEST_CASE("resolve_layout") {
  const MemoryLayout packed = MemoryLayout::packed();
  const MemoryLayout part = MemoryLayout::partitioned();
  DisturbanceReport d;
  CHECK(&resolve_layout(d, packed, part) == &packed);
  d.layout_override = LayoutKind::kPartitioned;
  CHECK(&resolve_layout(d, packed, part) == &part);
}
