#include "ctlab/keysearch.h"

#include <random>

#include "ctlab/hex.h"
#include "doctest.h"
#include "oracle/reference_aes.h"

using namespace ctlab;

namespace {

const Key128 kKey = parse_key("2b7e151628aed2a6abf7158809cf4f3c");

std::vector<KnownPair> pairs_for(const Key128& key, int n) {
  std::vector<KnownPair> out;
  for (int i = 0; i < n; ++i) {
    Block pt;
    pt.bytes.fill(static_cast<std::uint8_t>(0x11 * (i + 1)));
    Block ct;
    ct.bytes = oracle::openssl_encrypt(key.bytes, pt.bytes);
    out.push_back({pt, ct});
  }
  return out;
}

CandidateSets singletons(const Key128& key) {
  CandidateSets c;
  for (int j = 0; j < 16; ++j) c.positions[j] = {{key[j], 1.0}};
  return c;
}

// Independent soundness check through the reference implementation.
bool sound(const Key128& key, const std::vector<KnownPair>& pairs) {
  for (const KnownPair& p : pairs) {
    if (oracle::textbook_encrypt(key.bytes, p.pt.bytes) != p.ct.bytes) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("parse_pair") {
  const KnownPair p = parse_pair(
      "00112233445566778899aabbccddeeff:69c4e0d86a7b0430d8cdb78070b4c55a");
  CHECK(p.pt[15] == 0xff);
  CHECK(p.ct[0] == 0x69);
  CHECK_THROWS(parse_pair("0011"));
  CHECK_THROWS(parse_pair("zz:yy"));
  CHECK(parse_search_order("lex") == SearchOrder::kLex);
  CHECK_THROWS(parse_search_order("random"));
}

TEST_CASE("singleton sets hit on the first key") {
  const auto pairs = pairs_for(kKey, 2);
  const SearchOutcome r = brute_force(singletons(kKey), pairs);
  REQUIRE(r.found.has_value());
  CHECK(*r.found == kKey);
  CHECK(r.keys_tested == 1);
  CHECK(r.confirmed);
  CHECK(sound(*r.found, pairs));

  const SearchOutcome single = brute_force(singletons(kKey), std::span(pairs).first(1));
  CHECK(single.found.has_value());
  CHECK_FALSE(single.confirmed);
}

TEST_CASE("a missing byte exhausts the search") {
  CandidateSets c = singletons(kKey);
  c.positions[3] = {{static_cast<std::uint8_t>(kKey[3] ^ 1), 1.0},
                    {static_cast<std::uint8_t>(kKey[3] ^ 2), 0.5}};
  c.positions[8].push_back({static_cast<std::uint8_t>(kKey[8] ^ 4), 0.1});
  const SearchOutcome r = brute_force(c, pairs_for(kKey, 1));
  CHECK_FALSE(r.found.has_value());
  CHECK(BigInt(r.keys_tested) == keyspace_size(c));
}

TEST_CASE("no pairs or an unbounded space are errors") {
  CHECK_THROWS_AS(brute_force(singletons(kKey), {}), SearchError);
  const auto pairs = pairs_for(kKey, 1);
  CHECK_THROWS_AS(brute_force(full_candidate_sets(), pairs), SearchError);
}

TEST_CASE("completeness: two candidates over four positions") {
  // Positions 0..3 hold {truth, decoy} in either order; the rest are fixed.
  const auto pairs = pairs_for(kKey, 2);
  for (int placement = 0; placement < 16; ++placement) {
    CandidateSets c = singletons(kKey);
    for (int j = 0; j < 4; ++j) {
      const Candidate truth{kKey[j], 1.0};
      const Candidate decoy{static_cast<std::uint8_t>(kKey[j] ^ 0x80), 2.0};
      c.positions[j] = (placement >> j) & 1 ? std::vector{decoy, truth}
                                             : std::vector{truth, decoy};
    }
    const SearchOutcome r = brute_force(c, pairs);
    REQUIRE(r.found.has_value());
    CHECK(*r.found == kKey);
    // Canonical index: digit j is 1 when the truth sits second.
    std::uint64_t index = 0;
    for (int j = 0; j < 4; ++j) index = 2 * index + ((placement >> j) & 1);
    CHECK(r.keys_tested == index + 1);
  }
}

TEST_CASE("four candidates per position with random scores") {
  std::mt19937_64 rng(17);
  const auto pairs = pairs_for(kKey, 2);
  CandidateSets c;
  for (int j = 0; j < 16; ++j) {
    // Four positions branch so the run stays at desk scale.
    if (j % 5 != 0) {
      c.positions[j] = {{kKey[j], 0.0}};
      continue;
    }
    std::vector<Candidate> list = {{kKey[j], 0.0}};
    while (list.size() < 4) {
      const auto v = static_cast<std::uint8_t>(rng());
      if (std::none_of(list.begin(), list.end(),
                       [&](const Candidate& x) { return x.value == v; })) {
        list.push_back({v, 0.0});
      }
    }
    for (auto& cand : list) cand.score = std::uniform_real_distribution<>(0, 1)(rng);
    std::sort(list.begin(), list.end(),
              [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    c.positions[j] = list;
  }
  for (SearchOrder order : {SearchOrder::kScore, SearchOrder::kLex}) {
    SearchOptions opts;
    opts.order = order;
    const SearchOutcome r = brute_force(c, pairs, opts);
    REQUIRE(r.found.has_value());
    CHECK(*r.found == kKey);
    CHECK(r.keys_tested <= 256);
  }
}

TEST_CASE("result does not depend on the thread count") {
  // 2^18 keys across several chunks, with the truth deep in the order.
  const auto pairs = pairs_for(kKey, 1);
  CandidateSets c = singletons(kKey);
  for (int j : {2, 6, 10}) {
    c.positions[j].clear();
    for (int v = 0; v < 64; ++v) {
      c.positions[j].push_back({static_cast<std::uint8_t>(kKey[j] + 63 - v), 0.0});
    }
  }
  std::optional<Key128> first;
  for (unsigned threads : {1u, 2u, 4u, 7u}) {
    SearchOptions opts;
    opts.threads = threads;
    const SearchOutcome r = brute_force(c, pairs, opts);
    REQUIRE(r.found.has_value());
    CHECK(*r.found == kKey);
    if (!first) first = r.found;
    CHECK(*r.found == *first);
  }
  SearchOptions capped;
  capped.max_keys = 1000;
  const SearchOutcome r = brute_force(c, pairs, capped);
  CHECK_FALSE(r.found.has_value());
  CHECK(r.keys_tested == 1000);
}

TEST_CASE("search-rate benchmark") {
  const std::vector<double> sizes = {1, 1000, 20000};
  const auto points = measure_search_rate(sizes);
  REQUIRE(points.size() == 3);
  CHECK(points[0].keyspace == 1);
  CHECK(points[0].seconds < 0.1);
  CHECK(points[1].keyspace == 1000);
  CHECK(points[2].keyspace == 20000);
  CHECK(points[2].seconds >= points[0].seconds);
}

TEST_CASE("fit_rate") {
  std::vector<FitPoint> line;
  for (double x : {1e8, 3e8, 1e9, 7e9, 1e12}) line.push_back({x, 3e-8 * x});
  CHECK(fit_rate(line) == doctest::Approx(3e-8).epsilon(1e-10));
  CHECK(fit_r_squared(line, fit_rate(line)) == doctest::Approx(1.0));

  const std::vector<FitPoint> one = {{1e12, 24512.69}};
  CHECK(fit_rate(one) == doctest::Approx(2.451269e-8).epsilon(1e-9));

  const std::vector<FitPoint> small = {{10, 0.01}, {1e5, 0.02}};
  CHECK_THROWS_AS(fit_rate(small), FitError);
  CHECK(fit_rate(small, 0) > 0);
}

TEST_CASE("estimate_search_time") {
  CHECK(estimate_search_time(BigInt(1000000000000ull), 2.4e-8) ==
        doctest::Approx(24000));
  CHECK(estimate_search_time(BigInt(0), 2.4e-8) == 0);
  const double t = estimate_search_time(BigInt(1) << 128, 2.4e-8);
  CHECK(std::isfinite(t));
  CHECK(t == doctest::Approx(8.1666e30).epsilon(1e-4));
}
