#include "ctlab/countermeasures.h"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

namespace ctlab {

std::string_view to_string(CountermeasureKind kind) {
  switch (kind) {
    case CountermeasureKind::kNone: return "none";
    case CountermeasureKind::kRandomLoop: return "random_loop";
    case CountermeasureKind::kSpecifiedLoop: return "specified_loop";
    case CountermeasureKind::kPrefetch: return "prefetch";
    case CountermeasureKind::kCachePartition: return "cache_partition";
  }
  return "?";
}

CountermeasureKind parse_countermeasure(std::string_view name) {
  for (CountermeasureKind kind : kAllCountermeasures) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown countermeasure '" + std::string(name) +
                              "'");
}

std::string_view to_string(LayoutKind kind) {
  return kind == LayoutKind::kPacked ? "packed" : "partitioned";
}

LayoutKind parse_layout(std::string_view name) {
  if (name == "packed") return LayoutKind::kPacked;
  if (name == "partitioned") return LayoutKind::kPartitioned;
  throw std::invalid_argument("unknown layout '" + std::string(name) + "'");
}

CountermeasureState initial_state(CountermeasureKind kind) {
  switch (kind) {
    case CountermeasureKind::kSpecifiedLoop: return SpecifiedLoopState{};
    case CountermeasureKind::kPrefetch: return PrefetchState{};
    default: return NoState{};
  }
}

int random_loop_next(Prng& prng) { return static_cast<int>(prng() % 20); }

int specified_loop_next(SpecifiedLoopState& state) {
  state.gen /= SpecifiedLoopState::kDivisor;
  if (state.gen < SpecifiedLoopState::kResetThreshold) {
    state.gen = SpecifiedLoopState::kInitial;
    return 0;
  }
  return state.gen;
}

PrefetchWindow prefetch_next(PrefetchState& state) {
  const PrefetchWindow window{state.window_start};
  state.window_start = (state.window_start + PrefetchState::kWidth) % 256;
  return window;
}

std::array<TraceEntry, 4 * PrefetchState::kWidth> PrefetchWindow::accesses()
    const {
  std::array<TraceEntry, 4 * PrefetchState::kWidth> out;
  std::size_t k = 0;
  for (int i = start; i < end(); ++i) {
    for (int t = 0; t < 4; ++t) {
      out[k++] = {static_cast<TableId>(t), static_cast<std::uint8_t>(i)};
    }
  }
  return out;
}

std::uint64_t random_loop_cycles(int iterations, const CostModel& cost) {
  return cost.rng_cycles +
         static_cast<std::uint64_t>(iterations) * cost.loop_iter_cycles;
}

std::uint64_t specified_loop_cycles(int iterations, const CostModel& cost) {
  return cost.div_cycles +
         static_cast<std::uint64_t>(iterations) * cost.loop_iter_cycles;
}

std::array<std::size_t, kRounds / 2> round_loop_offsets() {
  std::array<std::size_t, kRounds / 2> out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 32 * i;
  return out;
}

namespace {

template <class T>
T& expect_state(CountermeasureState& state, CountermeasureKind kind) {
  if (auto* s = std::get_if<T>(&state)) return *s;
  throw ContractViolation("countermeasure state does not match kind " +
                          std::string(to_string(kind)));
}

}  // namespace

DisturbanceReport apply(CountermeasureKind kind, CountermeasureState& state,
                        const CostModel& cost, Prng& prng) {
  DisturbanceReport report;
  switch (kind) {
    case CountermeasureKind::kNone:
      expect_state<NoState>(state, kind);
      break;
    case CountermeasureKind::kRandomLoop:
      expect_state<NoState>(state, kind);
      report.extra_cycles = random_loop_cycles(random_loop_next(prng), cost);
      break;
    case CountermeasureKind::kSpecifiedLoop: {
      auto& s = expect_state<SpecifiedLoopState>(state, kind);
      report.extra_cycles = specified_loop_cycles(specified_loop_next(s), cost);
      break;
    }
    case CountermeasureKind::kPrefetch: {
      auto& s = expect_state<PrefetchState>(state, kind);
      report.extra_accesses.reserve(4 * PrefetchState::kWidth * kRounds / 2);
      for (std::size_t offset : round_loop_offsets()) {
        for (const TraceEntry& e : prefetch_next(s).accesses()) {
          report.extra_accesses.push_back({offset, e});
        }
      }
      break;
    }
    case CountermeasureKind::kCachePartition:
      expect_state<NoState>(state, kind);
      report.layout_override = LayoutKind::kPartitioned;
      break;
  }
  return report;
}

PartitionedTables::PartitionedTables(const TTableSet& source) {
  constexpr std::size_t kAlign = 0x1000000;
  region_ = static_cast<std::byte*>(std::aligned_alloc(kAlign, 2 * kAlign));
  if (region_ == nullptr) throw std::bad_alloc();
  for (std::size_t t = 0; t < kNumTables; ++t) {
    auto* dst = reinterpret_cast<std::uint32_t*>(region_ + kOffsets[t]);
    std::memcpy(dst, source.te[t].data(), sizeof(Table));
    view_.te[t] = dst;
  }
}

PartitionedTables::~PartitionedTables() { std::free(region_); }

namespace {

volatile int g_loop_sink;

void spin(int iterations) {
  int cnt = 0;
  for (int i = 0; i < iterations; ++i) {
    cnt++;
    g_loop_sink = cnt;
  }
}

class PrefetchObserver {
 public:
  PrefetchObserver(PrefetchState& state, const TableView& tables)
      : state_(state), tables_(tables) {}

  void on_round(int round) {
    if (round >= kRounds || round % 2 == 0) return;
    const PrefetchWindow window = prefetch_next(state_);
    for (int i = window.start; i < window.end(); ++i) {
      for (int t = 0; t < 4; ++t) {
        copies_[t][i % PrefetchState::kWidth] = tables_.te[t][i];
      }
    }
    asm volatile("nop" ::: "memory");
  }
  void on_lookup(TableId, std::uint8_t) noexcept {}

 private:
  PrefetchState& state_;
  const TableView& tables_;
  volatile std::uint32_t copies_[4][PrefetchState::kWidth] = {};
};

}  // namespace

ProtectedCipher::ProtectedCipher(const Key128& key, CountermeasureKind kind,
                                 std::uint64_t seed)
    : rk_(expand_key(key)),
      kind_(kind),
      state_(initial_state(kind)),
      prng_(seed),
      tables_(TableView::of(default_ttables())) {
  if (kind == CountermeasureKind::kCachePartition) {
    partitioned_ = std::make_unique<PartitionedTables>(default_ttables());
    tables_ = partitioned_->view();
  }
}

Block ProtectedCipher::encrypt(const Block& pt) {
  switch (kind_) {
    case CountermeasureKind::kRandomLoop:
      spin(random_loop_next(prng_));
      break;
    case CountermeasureKind::kSpecifiedLoop:
      spin(specified_loop_next(std::get<SpecifiedLoopState>(state_)));
      break;
    case CountermeasureKind::kPrefetch: {
      PrefetchObserver observer(std::get<PrefetchState>(state_), tables_);
      return encrypt_observed(pt, rk_, tables_, observer);
    }
    default:
      break;
  }
  return ctlab::encrypt(pt, rk_, tables_);
}

}  // namespace ctlab
