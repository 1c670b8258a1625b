#include "ctlab/attack.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "ctlab/text.h"
#include "ctlab/timing_channel.h"

namespace ctlab {

void TimingProfile::add(const Block& pt, std::uint64_t cycles) {
  const uint128 sq = static_cast<uint128>(cycles) * cycles;
  for (int j = 0; j < kPositions; ++j) {
    Bucket& b = buckets_[j][pt[j]];
    ++b.count;
    b.sum += cycles;
    b.sum_sq += sq;
  }
  ++samples_;
}

void TimingProfile::merge(const TimingProfile& other) {
  for (int j = 0; j < kPositions; ++j) {
    for (int v = 0; v < kValues; ++v) {
      Bucket& b = buckets_[j][v];
      const Bucket& o = other.buckets_[j][v];
      b.count += o.count;
      b.sum += o.sum;
      b.sum_sq += o.sum_sq;
    }
  }
  samples_ += other.samples_;
}

double TimingProfile::mean(int position) const {
  if (samples_ == 0) return 0;
  std::uint64_t total = 0;
  for (const Bucket& b : buckets_[position]) total += b.sum;
  return static_cast<double>(total) / static_cast<double>(samples_);
}

void TimingProfile::write_csv(std::ostream& out) const {
  out << "position,value,count,sum_cycles,sumsq_cycles\n";
  for (int j = 0; j < kPositions; ++j) {
    for (int v = 0; v < kValues; ++v) {
      const Bucket& b = buckets_[j][v];
      out << j << ',' << v << ',' << b.count << ',' << b.sum << ','
          << format_u128(b.sum_sq) << '\n';
    }
  }
}

TimingProfile TimingProfile::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) != "position,value,count,sum_cycles,sumsq_cycles") {
    throw std::runtime_error("profile csv: missing header");
  }
  TimingProfile p;
  std::array<std::array<bool, kValues>, kPositions> seen{};
  int rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw std::runtime_error("profile csv: bad row: " + line);
    const auto j = parse_u64(f[0]);
    const auto v = parse_u64(f[1]);
    if (j >= kPositions || v >= kValues || seen[j][v]) {
      throw std::runtime_error("profile csv: bad or duplicate cell: " + line);
    }
    seen[j][v] = true;
    Bucket& b = p.buckets_[j][v];
    b.count = parse_u64(f[2]);
    b.sum = parse_u64(f[3]);
    b.sum_sq = parse_u128(f[4]);
    ++rows;
  }
  if (rows != kPositions * kValues) {
    throw std::runtime_error("profile csv: expected 4096 rows, got " +
                             std::to_string(rows));
  }
  std::uint64_t n0 = 0;
  for (int j = 0; j < kPositions; ++j) {
    std::uint64_t n = 0;
    for (const Bucket& b : p.buckets_[j]) n += b.count;
    if (j == 0) n0 = n;
    if (n != n0) {
      throw std::runtime_error("profile csv: positions disagree on sample count");
    }
  }
  p.samples_ = n0;
  return p;
}

SignatureMatrix signature(const TimingProfile& profile) {
  SignatureMatrix sig;
  const double n = static_cast<double>(profile.samples());
  for (int j = 0; j < kPositions; ++j) {
    const double overall = profile.mean(j);
    uint128 sum_sq = 0;
    for (int v = 0; v < kValues; ++v) {
      const Bucket& b = profile.bucket(j, v);
      sum_sq += b.sum_sq;
      if (b.count == 0) {
        sig.s[j][v] = 0;
        sig.empty[j][v] = true;
      } else {
        sig.s[j][v] = static_cast<double>(b.sum) / static_cast<double>(b.count) -
                      overall;
      }
    }
    if (n > 0) {
      const double var = static_cast<double>(sum_sq) / n - overall * overall;
      sig.noise[j] = std::sqrt(std::max(var, 0.0));
    }
  }
  return sig;
}

Correlation correlate(const SignatureMatrix& study, const Key128& study_key,
                      const SignatureMatrix& attack) {
  Correlation c{};
  for (int j = 0; j < kPositions; ++j) {
    for (int g = 0; g < kValues; ++g) {
      const int shift = g ^ study_key[j];
      double acc = 0;
      for (int v = 0; v < kValues; ++v) {
        acc += attack.s[j][v] * study.s[j][v ^ shift];
      }
      c[j][g] = acc;
    }
  }
  return c;
}

namespace {

void sort_candidates(std::vector<Candidate>& list) {
  std::sort(list.begin(), list.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.value < b.value;
  });
}

}  // namespace

CandidateSets candidate_sets(const Correlation& c, double retention) {
  if (retention < 0) throw std::invalid_argument("retention must be >= 0");
  CandidateSets out;
  for (int j = 0; j < kPositions; ++j) {
    const auto& row = c[j];
    const double max = *std::max_element(row.begin(), row.end());
    double mean = 0;
    for (double x : row) mean += x;
    mean /= kValues;
    double var = 0;
    for (double x : row) var += (x - mean) * (x - mean);
    const double sigma = std::sqrt(var / kValues);
    const double cutoff = max - retention * sigma;
    for (int g = 0; g < kValues; ++g) {
      if (row[g] >= cutoff) {
        out.positions[j].push_back({static_cast<std::uint8_t>(g), row[g]});
      }
    }
    sort_candidates(out.positions[j]);
  }
  return out;
}

CandidateSets full_candidate_sets() {
  CandidateSets out;
  for (auto& list : out.positions) {
    for (int v = 0; v < kValues; ++v) {
      list.push_back({static_cast<std::uint8_t>(v), 0.0});
    }
  }
  return out;
}

void CandidateSets::write_csv(std::ostream& out) const {
  out << "position,value,score\n";
  for (int j = 0; j < kPositions; ++j) {
    for (const Candidate& c : positions[j]) {
      out << j << ',' << int{c.value} << ',' << format_double(c.score) << '\n';
    }
  }
}

CandidateSets CandidateSets::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "position,value,score") {
    throw std::runtime_error("candidate csv: missing header");
  }
  CandidateSets out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) {
      throw std::runtime_error("candidate csv: bad row: " + line);
    }
    const auto j = parse_u64(f[0]);
    const auto v = parse_u64(f[1]);
    if (j >= kPositions || v >= kValues) {
      throw std::runtime_error("candidate csv: out of range: " + line);
    }
    out.positions[j].push_back(
        {static_cast<std::uint8_t>(v), parse_double(f[2])});
  }
  for (int j = 0; j < kPositions; ++j) {
    auto& list = out.positions[j];
    if (list.empty()) {
      throw std::runtime_error("candidate csv: position " + std::to_string(j) +
                               " has no candidates");
    }
    sort_candidates(list);
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i].value == list[i - 1].value) {
        throw std::runtime_error("candidate csv: duplicate value");
      }
    }
  }
  return out;
}

int missing_bytes(const CandidateSets& cands, const Key128& true_key) {
  int m = 0;
  for (int j = 0; j < kPositions; ++j) {
    const auto& list = cands.positions[j];
    const bool present =
        std::any_of(list.begin(), list.end(),
                    [&](const Candidate& c) { return c.value == true_key[j]; });
    if (!present) ++m;
  }
  return m;
}

BigInt keyspace_size(const CandidateSets& cands) {
  BigInt size = 1;
  for (const auto& list : cands.positions) size *= list.size();
  return size;
}

double keyspace_log2(const CandidateSets& cands) {
  double bits = 0;
  for (const auto& list : cands.positions) {
    bits += std::log2(static_cast<double>(list.size()));
  }
  return bits;
}

Block PlaintextGenerator::next() {
  Block b;
  for (int half = 0; half < 2; ++half) {
    const std::uint64_t r = prng_();
    for (int i = 0; i < 8; ++i) {
      b[8 * half + i] = static_cast<std::uint8_t>(r >> (8 * i));
    }
  }
  return b;
}

CollectResult collect_profile(const TimingSource& source,
                              const CollectOptions& options) {
  if (options.samples == 0) {
    throw std::invalid_argument("collect_profile needs at least one sample");
  }
  PlaintextGenerator gen(options.seed);
  CollectResult result;
  std::uint64_t attempts = 0;
  long double total = 0;
  while (result.profile.samples() < options.samples) {
    const Block pt = gen.next();
    ++attempts;
    try {
      const std::uint64_t cycles = source(pt);
      result.profile.add(pt, cycles);
      total += cycles;
    } catch (const TimeoutError&) {
      ++result.failures;
      const bool judged = attempts >= 100 || options.samples < 100;
      if (judged && static_cast<double>(result.failures) >
                        options.max_failure_rate * static_cast<double>(attempts)) {
        if (result.profile.samples() > 0) {
          result.cycles_mean = static_cast<double>(
              total / static_cast<long double>(result.profile.samples()));
        }
        throw CollectionError("timing oracle failure rate too high (" +
                                  std::to_string(result.failures) + "/" +
                                  std::to_string(attempts) + ")",
                              std::move(result));
      }
    }
  }
  result.cycles_mean =
      static_cast<double>(total / static_cast<long double>(options.samples));
  return result;
}

}  // namespace ctlab
