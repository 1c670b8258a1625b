// T-table AES-128 encryption with an optional lookup observer.
//
// Word convention: state columns and round-key words are packed big-endian
// (byte 4c is the most significant byte of column c), as in OpenSSL's
// aes_core.c. Te0[x] = {2·S[x], S[x], S[x], 3·S[x]} from MSB to LSB, and
// Te1/Te2/Te3 are Te0 rotated right by 8/16/24 bits. Te4[x] holds S[x] in
// all four bytes and serves the final round.
//
// Lookups are issued in state-byte order: within every round, byte j of the
// state is looked up in table Te(j mod 4) (Te4 in the final round) before the
// column words are combined. A full encryption therefore issues
// 9 × 16 main-round lookups followed by 16 final-round lookups.

#ifndef CTLAB_AES_CORE_H_
#define CTLAB_AES_CORE_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ctlab {

inline constexpr int kRounds = 10;
inline constexpr std::size_t kMainLookups = 16 * (kRounds - 1);
inline constexpr std::size_t kTraceLength = kMainLookups + 16;

struct Block {
  std::array<std::uint8_t, 16> bytes{};

  std::uint8_t& operator[](std::size_t i) { return bytes[i]; }
  std::uint8_t operator[](std::size_t i) const { return bytes[i]; }
  friend bool operator==(const Block&, const Block&) = default;
};

struct Key128 {
  std::array<std::uint8_t, 16> bytes{};

  std::uint8_t& operator[](std::size_t i) { return bytes[i]; }
  std::uint8_t operator[](std::size_t i) const { return bytes[i]; }
  friend bool operator==(const Key128&, const Key128&) = default;
};

struct RoundKeys {
  std::array<std::uint32_t, 4 * (kRounds + 1)> words{};
};

enum class TableId : std::uint8_t { kTe0 = 0, kTe1, kTe2, kTe3, kTe4 };
inline constexpr std::size_t kNumTables = 5;

struct TraceEntry {
  TableId table;
  std::uint8_t index;
  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

using AccessTrace = std::vector<TraceEntry>;

using Table = std::array<std::uint32_t, 256>;

struct TTableSet {
  std::array<Table, kNumTables> te;

  const Table& operator[](TableId id) const {
    return te[static_cast<std::size_t>(id)];
  }
};

// Non-owning view over five tables; lets callers relocate the tables in
// memory (cache partitioning) without touching the cipher.
struct TableView {
  std::array<const std::uint32_t*, kNumTables> te;

  static TableView of(const TTableSet& set) {
    return {{set.te[0].data(), set.te[1].data(), set.te[2].data(),
             set.te[3].data(), set.te[4].data()}};
  }
};

const std::array<std::uint8_t, 256>& sbox();

RoundKeys expand_key(const Key128& key);
TTableSet generate_ttables();

// Process-wide tables in the default (packed) placement.
const TTableSet& default_ttables();

std::array<std::uint8_t, 16> first_round_indices(const Block& pt,
                                                 const Key128& key);

// Observer hooks: on_round(r) fires before the lookups of round r (1..10),
// on_lookup fires for every table fetch.
struct NullObserver {
  void on_round(int) noexcept {}
  void on_lookup(TableId, std::uint8_t) noexcept {}
};

class TraceRecorder {
 public:
  explicit TraceRecorder(AccessTrace& sink) : sink_(sink) {}
  void on_round(int) noexcept {}
  void on_lookup(TableId table, std::uint8_t index) {
    sink_.push_back({table, index});
  }

 private:
  AccessTrace& sink_;
};

namespace detail {

inline std::uint32_t load_be(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

inline void store_be(std::uint8_t* p, std::uint32_t w) {
  p[0] = static_cast<std::uint8_t>(w >> 24);
  p[1] = static_cast<std::uint8_t>(w >> 16);
  p[2] = static_cast<std::uint8_t>(w >> 8);
  p[3] = static_cast<std::uint8_t>(w);
}

inline std::uint8_t state_byte(const std::array<std::uint32_t, 4>& s,
                               int j) {
  return static_cast<std::uint8_t>(s[j >> 2] >> (24 - 8 * (j & 3)));
}

}  // namespace detail

template <class Observer>
Block encrypt_observed(const Block& pt, const RoundKeys& rk,
                       const TableView& tables, Observer& observer) {
  std::array<std::uint32_t, 4> s;
  for (int c = 0; c < 4; ++c) {
    s[c] = detail::load_be(&pt.bytes[4 * c]) ^ rk.words[c];
  }

  std::array<std::uint32_t, 16> fetched;
  for (int round = 1; round < kRounds; ++round) {
    observer.on_round(round);
    for (int j = 0; j < 16; ++j) {
      const std::uint8_t idx = detail::state_byte(s, j);
      const auto table = static_cast<TableId>(j & 3);
      observer.on_lookup(table, idx);
      fetched[j] = tables.te[j & 3][idx];
    }
    std::array<std::uint32_t, 4> t;
    for (int c = 0; c < 4; ++c) {
      t[c] = fetched[4 * c] ^ fetched[4 * ((c + 1) & 3) + 1] ^
             fetched[4 * ((c + 2) & 3) + 2] ^ fetched[4 * ((c + 3) & 3) + 3] ^
             rk.words[4 * round + c];
    }
    s = t;
  }

  observer.on_round(kRounds);
  const std::uint32_t* te4 = tables.te[4];
  for (int j = 0; j < 16; ++j) {
    const std::uint8_t idx = detail::state_byte(s, j);
    observer.on_lookup(TableId::kTe4, idx);
    fetched[j] = te4[idx];
  }
  Block out;
  for (int c = 0; c < 4; ++c) {
    const std::uint32_t w = (fetched[4 * c] & 0xff000000u) ^
                            (fetched[4 * ((c + 1) & 3) + 1] & 0x00ff0000u) ^
                            (fetched[4 * ((c + 2) & 3) + 2] & 0x0000ff00u) ^
                            (fetched[4 * ((c + 3) & 3) + 3] & 0x000000ffu) ^
                            rk.words[4 * kRounds + c];
    detail::store_be(&out.bytes[4 * c], w);
  }
  return out;
}

Block encrypt(const Block& pt, const RoundKeys& rk, const TableView& tables);

// Appends exactly kTraceLength entries to `trace_sink`.
Block encrypt(const Block& pt, const RoundKeys& rk, const TableView& tables,
              AccessTrace& trace_sink);

}  // namespace ctlab

#endif  // CTLAB_AES_CORE_H_
