#include "ctlab/aes_core.h"

#include <random>

#include "ctlab/hex.h"
#include "doctest.h"
#include "oracle/reference_aes.h"

using namespace ctlab;

namespace {

std::string round_key_hex(const RoundKeys& rk, int round) {
  std::array<std::uint8_t, 16> bytes;
  for (int c = 0; c < 4; ++c) detail::store_be(&bytes[4 * c], rk.words[4 * round + c]);
  return to_hex(bytes);
}

}  // namespace

TEST_CASE("sbox matches the GF(2^8) inverse construction") {
  CHECK(sbox() == oracle::computed_sbox());
}

TEST_CASE("expand_key against a byte-oriented schedule") {
  SUBCASE("all-zero key") {
    const RoundKeys rk = expand_key(Key128{});
    CHECK(rk.words[4] == 0x62636363u);
    CHECK(round_key_hex(rk, 10) == "b4ef5bcb3e92e21123e951cf6f8f188e");
  }
  SUBCASE("000102..0f") {
    const RoundKeys rk = expand_key(parse_key("000102030405060708090a0b0c0d0e0f"));
    CHECK(rk.words[4] == 0xd6aa74fdu);
    CHECK(round_key_hex(rk, 10) == "13111d7fe3944a17f307a78b4d2b30c5");
  }
  SUBCASE("random keys, every word") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      Key128 key;
      for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng());
      const RoundKeys rk = expand_key(key);
      const auto ref = oracle::textbook_schedule(key.bytes);
      for (int i = 0; i < 44; ++i) {
        CHECK(rk.words[i] == detail::load_be(&ref[4 * i]));
      }
      std::array<std::uint8_t, 16> prefix;
      for (int c = 0; c < 4; ++c) detail::store_be(&prefix[4 * c], rk.words[c]);
      CHECK(prefix == key.bytes);
    }
  }
}

TEST_CASE("T-table construction") {
  const TTableSet t = generate_ttables();
  CHECK(t[TableId::kTe4][0x00] == 0x63636363u);
  // {2·63, 63, 63, 3·63} = {c6, 63, 63, a5}
  CHECK(t[TableId::kTe0][0x00] == 0xc66363a5u);
  for (int x = 0; x < 256; ++x) {
    const std::uint32_t te0 = t[TableId::kTe0][x];
    CHECK(t[TableId::kTe1][x] == ((te0 >> 8) | (te0 << 24)));
    CHECK(t[TableId::kTe2][x] == ((te0 >> 16) | (te0 << 16)));
    CHECK(t[TableId::kTe3][x] == ((te0 >> 24) | (te0 << 8)));
    const std::uint8_t s = sbox()[x];
    CHECK(t[TableId::kTe4][x] == std::uint32_t{s} * 0x01010101u);
  }
}

TEST_CASE("encrypt known answers") {
  const TableView tables = TableView::of(default_ttables());
  const Block fips = encrypt(parse_block("00112233445566778899aabbccddeeff"),
                             expand_key(parse_key("000102030405060708090a0b0c0d0e0f")),
                             tables);
  CHECK(to_hex(fips) == "69c4e0d86a7b0430d8cdb78070b4c55a");
  CHECK(to_hex(encrypt(Block{}, expand_key(Key128{}), tables)) ==
        "66e94bd4ef8a2c3b884cfa59ca342b2e");
}

TEST_CASE("encrypt matches both oracles on random inputs") {
  std::mt19937_64 rng(5);
  const TableView tables = TableView::of(default_ttables());
  for (int trial = 0; trial < 300; ++trial) {
    Key128 key;
    Block pt;
    for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng());
    for (auto& b : pt.bytes) b = static_cast<std::uint8_t>(rng());
    const Block ct = encrypt(pt, expand_key(key), tables);
    CHECK(ct.bytes == oracle::textbook_encrypt(key.bytes, pt.bytes));
    CHECK(ct.bytes == oracle::openssl_encrypt(key.bytes, pt.bytes));
  }
}

TEST_CASE("access trace shape") {
  std::mt19937_64 rng(9);
  const TableView tables = TableView::of(default_ttables());
  for (int trial = 0; trial < 20; ++trial) {
    Key128 key;
    Block pt;
    for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng());
    for (auto& b : pt.bytes) b = static_cast<std::uint8_t>(rng());
    const RoundKeys rk = expand_key(key);
    AccessTrace trace;
    const Block traced = encrypt(pt, rk, tables, trace);
    CHECK(traced == encrypt(pt, rk, tables));
    REQUIRE(trace.size() == kTraceLength);
    for (std::size_t i = 0; i < kMainLookups; ++i) {
      CHECK(trace[i].table == static_cast<TableId>(i % 4));
    }
    for (std::size_t i = kMainLookups; i < kTraceLength; ++i) {
      CHECK(trace[i].table == TableId::kTe4);
    }
    const auto first = first_round_indices(pt, key);
    for (int j = 0; j < 16; ++j) CHECK(trace[j].index == first[j]);

    AccessTrace again;
    encrypt(pt, rk, tables, again);
    CHECK(again == trace);
  }
}

TEST_CASE("first_round_indices") {
  const Key128 key = parse_key("2b7e151628aed2a6abf7158809cf4f3c");
  const auto same = first_round_indices(Block{key.bytes}, key);
  for (auto v : same) CHECK(v == 0);

  const Block pt = parse_block("00112233445566778899aabbccddeeff");
  CHECK(first_round_indices(pt, Key128{}) == pt.bytes);

  Block p11;
  p11.bytes.fill(0x11);
  Key128 k22;
  k22.bytes.fill(0x22);
  for (auto v : first_round_indices(p11, k22)) CHECK(v == 0x33);
}
