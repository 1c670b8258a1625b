// Brute force over the reduced key space, plus the search-rate benchmark and
// the linear time model fitted to it.

#ifndef CTLAB_KEYSEARCH_H_
#define CTLAB_KEYSEARCH_H_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ctlab/aes_core.h"
#include "ctlab/attack.h"

namespace ctlab {

struct KnownPair {
  Block pt;
  Block ct;
};

// Parses "pt_hex:ct_hex".
KnownPair parse_pair(std::string_view text);

enum class SearchOrder { kScore, kLex };
SearchOrder parse_search_order(std::string_view name);

struct SearchOptions {
  unsigned threads = 1;
  SearchOrder order = SearchOrder::kScore;
  // Stop after this many keys in canonical order (benchmarking).
  std::optional<std::uint64_t> max_keys;
};

struct SearchOutcome {
  std::optional<Key128> found;
  std::uint64_t keys_tested = 0;
  double elapsed = 0;  // seconds
  // True when at least two pairs agreed on the found key.
  bool confirmed = false;
};

class SearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Enumerates the Cartesian product of candidate values. Canonical order is
// mixed-radix with position 0 most significant; each position's digits
// follow its candidate list (score order) or ascending value (lex order).
// The reported key is the first match in canonical order, independent of
// the thread count. Throws SearchError when `pairs` is empty or the space
// exceeds 2^64 keys without max_keys.
SearchOutcome brute_force(const CandidateSets& cands,
                          std::span<const KnownPair> pairs,
                          const SearchOptions& options = {});

struct FitPoint {
  double keyspace;
  double seconds;
};

// Worst-case wall time per size: full candidate sets cut to `size` keys,
// verified against a ciphertext no key in range produces.
std::vector<FitPoint> measure_search_rate(std::span<const double> sizes,
                                          unsigned threads = 1);

class FitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kDefaultFitThreshold = 1e8;

// Through-origin least squares over points with keyspace >= min_size.
double fit_rate(std::span<const FitPoint> points,
                double min_size = kDefaultFitThreshold);

// Uncentred R^2 of the through-origin model on the retained points.
double fit_r_squared(std::span<const FitPoint> points, double alpha,
                     double min_size = kDefaultFitThreshold);

// Seconds to exhaust `keyspace` at `alpha` seconds per key.
double estimate_search_time(const BigInt& keyspace, double alpha);

}  // namespace ctlab

#endif  // CTLAB_KEYSEARCH_H_
