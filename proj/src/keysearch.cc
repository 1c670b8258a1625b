#include "ctlab/keysearch.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "ctlab/hex.h"

namespace ctlab {

KnownPair parse_pair(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("pair must be pt_hex:ct_hex");
  }
  return {parse_block(text.substr(0, colon)), parse_block(text.substr(colon + 1))};
}

SearchOrder parse_search_order(std::string_view name) {
  if (name == "score") return SearchOrder::kScore;
  if (name == "lex") return SearchOrder::kLex;
  throw std::invalid_argument("unknown search order '" + std::string(name) +
                              "'");
}

namespace {

constexpr std::uint64_t kChunk = 1 << 14;

struct Digits {
  std::array<std::vector<std::uint8_t>, kPositions> values;
  std::array<std::uint64_t, kPositions> radix{};
};

Digits digits_for(const CandidateSets& cands, SearchOrder order) {
  Digits d;
  for (int j = 0; j < kPositions; ++j) {
    for (const Candidate& c : cands.positions[j]) d.values[j].push_back(c.value);
    if (order == SearchOrder::kLex) {
      std::sort(d.values[j].begin(), d.values[j].end());
    }
    d.radix[j] = d.values[j].size();
  }
  return d;
}

bool matches(const Key128& key, std::span<const KnownPair> pairs,
             const TableView& tables) {
  const RoundKeys rk = expand_key(key);
  for (const KnownPair& p : pairs) {
    if (!(encrypt(p.pt, rk, tables) == p.ct)) return false;
  }
  return true;
}

// Tests keys [begin, end) of the canonical order; returns the first matching
// index or `end`. Stops early once `best` drops to or below the cursor.
std::uint64_t scan(const Digits& d, std::span<const KnownPair> pairs,
                   std::uint64_t begin, std::uint64_t end,
                   const std::atomic<std::uint64_t>& best,
                   std::uint64_t& tested) {
  const TableView tables = TableView::of(default_ttables());
  std::array<std::uint64_t, kPositions> digit{};
  std::uint64_t rest = begin;
  for (int j = kPositions - 1; j >= 0; --j) {
    digit[j] = rest % d.radix[j];
    rest /= d.radix[j];
  }
  Key128 key;
  for (int j = 0; j < kPositions; ++j) key[j] = d.values[j][digit[j]];

  for (std::uint64_t i = begin; i < end; ++i) {
    if ((i & 1023) == 0 && best.load(std::memory_order_relaxed) <= i) {
      return end;
    }
    ++tested;
    if (matches(key, pairs, tables)) return i;
    for (int j = kPositions - 1; j >= 0; --j) {
      if (++digit[j] < d.radix[j]) {
        key[j] = d.values[j][digit[j]];
        break;
      }
      digit[j] = 0;
      key[j] = d.values[j][0];
    }
  }
  return end;
}

}  // namespace

SearchOutcome brute_force(const CandidateSets& cands,
                          std::span<const KnownPair> pairs,
                          const SearchOptions& options) {
  if (pairs.empty()) throw SearchError("brute force needs a known pair");
  for (const auto& list : cands.positions) {
    if (list.empty()) return {};
  }
  const BigInt space = keyspace_size(cands);
  std::uint64_t total = 0;
  if (space > BigInt(std::numeric_limits<std::uint64_t>::max())) {
    if (!options.max_keys) {
      throw SearchError("key space too large to enumerate");
    }
    total = *options.max_keys;
  } else {
    total = space.convert_to<std::uint64_t>();
    if (options.max_keys) total = std::min(total, *options.max_keys);
  }

  const Digits digits = digits_for(cands, options.order);
  const auto start = std::chrono::steady_clock::now();
  std::atomic<std::uint64_t> best{total};
  std::atomic<std::uint64_t> next_chunk{0};
  const unsigned threads = std::max(1u, options.threads);
  std::vector<std::uint64_t> tested(threads, 0);

  auto worker = [&](unsigned id) {
    while (true) {
      const std::uint64_t c = next_chunk.fetch_add(1);
      if (c > total / kChunk) return;
      const std::uint64_t begin = c * kChunk;
      if (begin >= total || begin >= best.load()) return;
      const std::uint64_t end = std::min(total, begin + kChunk);
      const std::uint64_t hit =
          scan(digits, pairs, begin, end, best, tested[id]);
      if (hit < end) {
        std::uint64_t cur = best.load();
        while (hit < cur && !best.compare_exchange_weak(cur, hit)) {
        }
        return;
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }

  SearchOutcome out;
  for (std::uint64_t t : tested) out.keys_tested += t;
  out.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
  const std::uint64_t hit = best.load();
  if (hit < total) {
    Key128 key;
    std::uint64_t rest = hit;
    for (int j = kPositions - 1; j >= 0; --j) {
      key[j] = digits.values[j][rest % digits.radix[j]];
      rest /= digits.radix[j];
    }
    out.found = key;
    out.confirmed = pairs.size() >= 2;
  }
  return out;
}

std::vector<FitPoint> measure_search_rate(std::span<const double> sizes,
                                          unsigned threads) {
  const CandidateSets full = full_candidate_sets();
  // All-ones ciphertext: no key in a desk-scale prefix maps zero to it.
  KnownPair pair;
  pair.ct.bytes.fill(0xff);
  std::vector<FitPoint> out;
  for (double size : sizes) {
    SearchOptions opts;
    opts.threads = threads;
    opts.order = SearchOrder::kLex;
    opts.max_keys = static_cast<std::uint64_t>(std::llround(size));
    const SearchOutcome r = brute_force(full, std::span(&pair, 1), opts);
    out.push_back({static_cast<double>(r.keys_tested), r.elapsed});
  }
  return out;
}

double fit_rate(std::span<const FitPoint> points, double min_size) {
  double sxy = 0;
  double sxx = 0;
  int used = 0;
  for (const FitPoint& p : points) {
    if (p.keyspace < min_size) continue;
    sxy += p.keyspace * p.seconds;
    sxx += p.keyspace * p.keyspace;
    ++used;
  }
  if (used == 0 || sxx == 0) {
    throw FitError("no fit points at or above the size threshold");
  }
  return sxy / sxx;
}

double fit_r_squared(std::span<const FitPoint> points, double alpha,
                     double min_size) {
  double ss_res = 0;
  double ss_tot = 0;
  for (const FitPoint& p : points) {
    if (p.keyspace < min_size) continue;
    const double r = p.seconds - alpha * p.keyspace;
    ss_res += r * r;
    ss_tot += p.seconds * p.seconds;
  }
  if (ss_tot == 0) throw FitError("no fit points at or above the size threshold");
  return 1.0 - ss_res / ss_tot;
}

double estimate_search_time(const BigInt& keyspace, double alpha) {
  return keyspace.convert_to<double>() * alpha;
}

}  // namespace ctlab
