// Bernstein-style correlation attack on the first AES round.
//
// Timings are bucketed by (byte position j, plaintext byte v). The per-bucket
// deviation from the position mean is the signature. Because the first-round
// table index is v ^ key[j], a signature collected under a known study key
// and one collected under the target key differ only by an XOR relabeling of
// v, which correlate() undoes for every guess g.

#ifndef CTLAB_ATTACK_H_
#define CTLAB_ATTACK_H_

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "ctlab/aes_core.h"
#include "ctlab/countermeasures.h"

namespace ctlab {

using BigInt = boost::multiprecision::cpp_int;
using uint128 = unsigned __int128;

inline constexpr int kPositions = 16;
inline constexpr int kValues = 256;

struct Bucket {
  std::uint64_t count = 0;
  std::uint64_t sum = 0;
  uint128 sum_sq = 0;
  friend bool operator==(const Bucket&, const Bucket&) = default;
};

class TimingProfile {
 public:
  void add(const Block& pt, std::uint64_t cycles);
  void merge(const TimingProfile& other);

  const Bucket& bucket(int position, int value) const {
    return buckets_[position][value];
  }
  std::uint64_t samples() const { return samples_; }
  double mean(int position) const;

  // CSV header `position,value,count,sum_cycles,sumsq_cycles` then 4096 rows.
  void write_csv(std::ostream& out) const;
  // Throws std::runtime_error on malformed input or inconsistent counts.
  static TimingProfile read_csv(std::istream& in);

  friend bool operator==(const TimingProfile&, const TimingProfile&) = default;

 private:
  std::array<std::array<Bucket, kValues>, kPositions> buckets_{};
  std::uint64_t samples_ = 0;
};

struct SignatureMatrix {
  std::array<std::array<double, kValues>, kPositions> s{};
  std::array<std::array<bool, kValues>, kPositions> empty{};
  // Per-position standard deviation of the raw cycle samples.
  std::array<double, kPositions> noise{};
};

SignatureMatrix signature(const TimingProfile& profile);

using Correlation = std::array<std::array<double, kValues>, kPositions>;

// c[j][g] = sum_v attack[j][v] * study[j][v ^ g ^ study_key[j]]
Correlation correlate(const SignatureMatrix& study, const Key128& study_key,
                      const SignatureMatrix& attack);

struct Candidate {
  std::uint8_t value;
  double score;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct CandidateSets {
  // Sorted by descending score, ties by ascending value.
  std::array<std::vector<Candidate>, kPositions> positions;

  // position,value,score sorted by position then descending score.
  void write_csv(std::ostream& out) const;
  static CandidateSets read_csv(std::istream& in);

  friend bool operator==(const CandidateSets&, const CandidateSets&) = default;
};

// Keeps g with c[j][g] >= max_g c[j] - retention * stddev_g c[j].
CandidateSets candidate_sets(const Correlation& c, double retention);

// Every value at every position, scored zero.
CandidateSets full_candidate_sets();

int missing_bytes(const CandidateSets& cands, const Key128& true_key);
BigInt keyspace_size(const CandidateSets& cands);
double keyspace_log2(const CandidateSets& cands);

class PlaintextGenerator {
 public:
  explicit PlaintextGenerator(std::uint64_t seed) : prng_(seed) {}
  Block next();

 private:
  Prng prng_;
};

// Returns the cycle count for one encryption of `pt`; may throw
// TimeoutError, which the collector counts as a failed sample.
using TimingSource = std::function<std::uint64_t(const Block& pt)>;

struct CollectOptions {
  std::uint64_t samples = 1;
  std::uint64_t seed = 0;
  // Abort once failures exceed this fraction of attempts (checked after 100
  // attempts, or on any failure when samples < 100).
  double max_failure_rate = 0.05;
};

struct CollectResult {
  TimingProfile profile;
  std::uint64_t failures = 0;
  double cycles_mean = 0;
};

class CollectionError : public std::runtime_error {
 public:
  CollectionError(const std::string& what, CollectResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const CollectResult& partial() const { return partial_; }

 private:
  CollectResult partial_;
};

CollectResult collect_profile(const TimingSource& source,
                              const CollectOptions& options);

}  // namespace ctlab

#endif  // CTLAB_ATTACK_H_
