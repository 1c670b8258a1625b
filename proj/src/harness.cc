#include "ctlab/harness.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "ctlab/hex.h"
#include "ctlab/keysearch.h"
#include "ctlab/text.h"

namespace ctlab {

double slowdown(double c_variant, double c_baseline) {
  if (!(c_baseline > 0)) throw MetricError("baseline cycles must be positive");
  return c_variant / c_baseline;
}

double efficiency(double m, double s) {
  if (!(s > 0)) throw MetricError("slowdown must be positive");
  return m / s;
}

ExperimentConfig::ExperimentConfig()
    : study_key(parse_key("000102030405060708090a0b0c0d0e0f")),
      attack_key(parse_key("2b7e151628aed2a6abf7158809cf4f3c")) {}

std::uint64_t derive_seed(std::uint64_t base, unsigned run,
                          std::uint64_t purpose) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (1 + run * 8 + purpose);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

enum Purpose : std::uint64_t {
  kServerSeed = 1,
  kStudyPlaintexts = 2,
  kAttackPlaintexts = 3,
  kVerifyPlaintexts = 4,
};

ChannelConfig phase_channel(const ExperimentConfig& cfg, unsigned run,
                            const Key128& key) {
  ChannelConfig ch;
  ch.packet_size = cfg.packet_size;
  ch.timing_scope = cfg.timing_scope;
  ch.backend = cfg.backend;
  ch.key = key;
  ch.countermeasure = cfg.countermeasure;
  ch.seed = derive_seed(cfg.seed, run, kServerSeed);
  ch.sim = cfg.sim;
  return ch;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "countermeasure", "backend", "packet_size", "timing_scope",
      "rng_cycles", "loop_iter_cycles", "div_cycles", "cache.line_size",
      "cache.sets", "cache.assoc", "cache.hit_cycles", "cache.miss_cycles",
      "cache.cold_flush", "layout", "ambient.lines", "ambient.seed",
      "ambient.region_base", "ambient.region_size", "samples",
      "samples_study", "samples_attack", "retention", "seed", "study_key",
      "attack_key", "runs", "search", "search.max_keyspace",
      "search.threads", "alpha", "key", "port", "address", "live_seed"};
  return keys;
}

void check_known(const ConfigMap& map) {
  for (const auto& [k, v] : map.values()) {
    if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
}

std::uint64_t get_u64(const ConfigMap& map, const std::string& key,
                      std::uint64_t fallback) {
  const auto v = map.get(key);
  if (!v) return fallback;
  try {
    std::string_view text = *v;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
      return std::stoull(std::string(text.substr(2)), nullptr, 16);
    }
    // Accept 1e6-style sizes.
    if (text.find_first_of("eE.") != std::string_view::npos) {
      return static_cast<std::uint64_t>(std::llround(parse_double(text)));
    }
    return parse_u64(text);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad integer '" + *v + "'");
  }
}

double get_double(const ConfigMap& map, const std::string& key,
                  double fallback) {
  const auto v = map.get(key);
  if (!v) return fallback;
  try {
    return parse_double(*v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad number '" + *v + "'");
  }
}

bool get_bool(const ConfigMap& map, const std::string& key, bool fallback) {
  const auto v = map.get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError("config key '" + key + "': bad boolean '" + *v + "'");
}

template <class Parse>
auto get_parsed(const ConfigMap& map, const std::string& key,
                decltype(std::declval<Parse>()(std::string_view{})) fallback,
                Parse parse) {
  const auto v = map.get(key);
  if (!v) return fallback;
  try {
    return parse(*v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::uint32_t narrow32(std::uint64_t v, const std::string& key) {
  if (v > 0xffffffffull) throw ConfigError("config key '" + key + "' too large");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void apply_simulation_keys(const ConfigMap& map, SimulationConfig& sim) {
  check_known(map);
  CacheConfig& c = sim.cache;
  c.line_size = narrow32(get_u64(map, "cache.line_size", c.line_size),
                         "cache.line_size");
  c.num_sets = narrow32(get_u64(map, "cache.sets", c.num_sets), "cache.sets");
  c.associativity =
      narrow32(get_u64(map, "cache.assoc", c.associativity), "cache.assoc");
  c.hit_cycles = get_u64(map, "cache.hit_cycles", c.hit_cycles);
  c.miss_cycles = get_u64(map, "cache.miss_cycles", c.miss_cycles);
  c.cold_flush_per_encryption =
      get_bool(map, "cache.cold_flush", c.cold_flush_per_encryption);
  try {
    c.validate();
  } catch (const CacheConfigError& e) {
    throw ConfigError(e.what());
  }
  sim.layout = get_parsed(map, "layout", sim.layout, parse_layout);
  sim.ambient.lines =
      narrow32(get_u64(map, "ambient.lines", sim.ambient.lines), "ambient.lines");
  sim.ambient.seed = get_u64(map, "ambient.seed", sim.ambient.seed);
  sim.ambient.region_base =
      get_u64(map, "ambient.region_base", sim.ambient.region_base);
  sim.ambient.region_size =
      get_u64(map, "ambient.region_size", sim.ambient.region_size);
  sim.cost.rng_cycles = get_u64(map, "rng_cycles", sim.cost.rng_cycles);
  sim.cost.loop_iter_cycles =
      get_u64(map, "loop_iter_cycles", sim.cost.loop_iter_cycles);
  sim.cost.div_cycles = get_u64(map, "div_cycles", sim.cost.div_cycles);
}

void apply_channel_keys(const ConfigMap& map, ChannelConfig& ch) {
  apply_simulation_keys(map, ch.sim);
  ch.countermeasure =
      get_parsed(map, "countermeasure", ch.countermeasure, parse_countermeasure);
  ch.backend = get_parsed(map, "backend", ch.backend, parse_backend);
  ch.timing_scope =
      get_parsed(map, "timing_scope", ch.timing_scope, parse_timing_scope);
  ch.packet_size = get_u64(map, "packet_size", ch.packet_size);
  ch.key = get_parsed(map, "key", ch.key, parse_key);
  ch.address = map.get("address").value_or(ch.address);
  const std::uint64_t port = get_u64(map, "port", ch.port);
  if (port > 65535) throw ConfigError("port out of range");
  ch.port = static_cast<std::uint16_t>(port);
  ch.seed = get_u64(map, "seed", ch.seed);
  ch.live_seed = get_bool(map, "live_seed", ch.live_seed);
  try {
    ch.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig experiment_config_from(const ConfigMap& map) {
  check_known(map);
  ExperimentConfig cfg;
  apply_simulation_keys(map, cfg.sim);
  cfg.countermeasure =
      get_parsed(map, "countermeasure", cfg.countermeasure, parse_countermeasure);
  cfg.backend = get_parsed(map, "backend", cfg.backend, parse_backend);
  cfg.timing_scope =
      get_parsed(map, "timing_scope", cfg.timing_scope, parse_timing_scope);
  cfg.packet_size = get_u64(map, "packet_size", cfg.packet_size);
  if (cfg.packet_size < wire::kMinRequestSize) {
    throw ConfigError("packet_size must be at least 17 bytes");
  }
  const std::uint64_t samples = get_u64(map, "samples", cfg.samples_study);
  cfg.samples_study = get_u64(map, "samples_study", samples);
  cfg.samples_attack = get_u64(map, "samples_attack", samples);
  if (cfg.samples_study == 0 || cfg.samples_attack == 0) {
    throw ConfigError("sample counts must be positive");
  }
  cfg.retention = get_double(map, "retention", cfg.retention);
  if (!(cfg.retention >= 0)) throw ConfigError("retention must be >= 0");
  cfg.seed = get_u64(map, "seed", cfg.seed);
  cfg.study_key = get_parsed(map, "study_key", cfg.study_key, parse_key);
  cfg.attack_key = get_parsed(map, "attack_key", cfg.attack_key, parse_key);
  cfg.runs = narrow32(get_u64(map, "runs", cfg.runs), "runs");
  if (cfg.runs == 0) throw ConfigError("runs must be positive");
  cfg.search = get_bool(map, "search", cfg.search);
  cfg.search_max_keyspace =
      get_double(map, "search.max_keyspace", cfg.search_max_keyspace);
  cfg.search_threads =
      narrow32(get_u64(map, "search.threads", cfg.search_threads), "search.threads");
  cfg.alpha = get_double(map, "alpha", cfg.alpha);
  if (!(cfg.alpha > 0)) throw ConfigError("alpha must be positive");
  return cfg;
}

ChannelConfig ExperimentConfig::study_channel(unsigned run) const {
  return phase_channel(*this, run, study_key);
}

ChannelConfig ExperimentConfig::attack_channel(unsigned run) const {
  return phase_channel(*this, run, attack_key);
}

void check_phase_configs(const ChannelConfig& study,
                         const ChannelConfig& attack) {
  ChannelConfig a = study;
  ChannelConfig b = attack;
  a.key = Key128{};
  b.key = Key128{};
  if (!(a == b)) {
    throw ConfigMismatch(
        "study and attack servers must be configured identically except for "
        "the key");
  }
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kBaseline: return "baseline";
    case Stage::kStudy: return "study";
    case Stage::kAttack: return "attack";
    case Stage::kCorrelate: return "correlate";
    case Stage::kSearch: return "search";
    case Stage::kComplete: return "complete";
  }
  return "?";
}

bool ExperimentReport::key_recovered(const Key128& attack_key) const {
  if (!ok() || runs.empty()) return false;
  return std::all_of(runs.begin(), runs.end(), [&](const RunResult& r) {
    return r.recovered && *r.recovered == attack_key;
  });
}

namespace {

CollectResult collect_from(EncryptionService& service, std::uint64_t samples,
                           std::uint64_t seed) {
  return collect_profile(
      [&](const Block& pt) { return service.time_encryption(pt).cycles; },
      {samples, seed});
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  ExperimentReport report;
  report.summary.countermeasure = std::string(to_string(config.countermeasure));
  if (config.backend == Backend::kNative) report.notes.push_back(kHardwareMarker);

  double m_total = 0;
  double c_total = 0;
  double base_total = 0;
  double log2_total = 0;
  Stage stage = Stage::kStudy;
  try {
    for (unsigned run = 0; run < config.runs; ++run) {
      RunResult result;
      const ChannelConfig study_cfg = config.study_channel(run);
      const ChannelConfig attack_cfg = config.attack_channel(run);
      check_phase_configs(study_cfg, attack_cfg);

      stage = Stage::kStudy;
      EncryptionService study(study_cfg);
      const CollectResult study_data =
          collect_from(study, config.samples_study,
                       derive_seed(config.seed, run, kStudyPlaintexts));

      stage = Stage::kAttack;
      EncryptionService attack(attack_cfg);
      const std::uint64_t attack_seed =
          derive_seed(config.seed, run, kAttackPlaintexts);
      const CollectResult attack_data =
          collect_from(attack, config.samples_attack, attack_seed);
      result.c = attack_data.cycles_mean;

      stage = Stage::kBaseline;
      if (config.countermeasure == CountermeasureKind::kNone) {
        result.c_baseline = result.c;
      } else {
        ChannelConfig base_cfg = attack_cfg;
        base_cfg.countermeasure = CountermeasureKind::kNone;
        EncryptionService baseline(base_cfg);
        result.c_baseline =
            collect_from(baseline, config.samples_attack, attack_seed)
                .cycles_mean;
      }

      stage = Stage::kCorrelate;
      const Correlation corr =
          correlate(signature(study_data.profile), config.study_key,
                    signature(attack_data.profile));
      CandidateSets cands = candidate_sets(corr, config.retention);
      result.m = missing_bytes(cands, config.attack_key);
      result.keyspace_log2 = keyspace_log2(cands);

      stage = Stage::kSearch;
      if (config.search &&
          keyspace_size(cands).convert_to<double>() <= config.search_max_keyspace) {
        PlaintextGenerator verify(
            derive_seed(config.seed, run, kVerifyPlaintexts));
        std::array<KnownPair, 2> pairs;
        for (KnownPair& p : pairs) {
          p.pt = verify.next();
          p.ct = attack.ciphertext(p.pt);
        }
        SearchOptions opts;
        opts.threads = config.search_threads;
        const SearchOutcome found = brute_force(cands, pairs, opts);
        result.searched = true;
        result.recovered = found.found;
        result.keys_tested = found.keys_tested;
      }

      m_total += result.m;
      c_total += result.c;
      base_total += result.c_baseline;
      log2_total += result.keyspace_log2;
      report.runs.push_back(result);
      report.last_candidates = std::move(cands);
    }
  } catch (const std::exception& e) {
    report.stage = stage;
    report.error = e.what();
  }

  const double n = static_cast<double>(report.runs.size());
  if (n > 0) {
    EfficiencyReport& s = report.summary;
    s.m = m_total / n;
    s.c = c_total / n;
    s.s = config.countermeasure == CountermeasureKind::kNone
              ? 1.0
              : slowdown(c_total, base_total);
    s.efficiency = efficiency(s.m, s.s);
    s.keyspace_log2 = log2_total / n;
    s.search_seconds = std::exp2(s.keyspace_log2) * config.alpha;
    if (s.efficiency == 0) report.notes.push_back(kZeroEfficiencyCaveat);
  }
  return report;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "table") return ReportFormat::kTable;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "plotdata") return ReportFormat::kPlotData;
  throw std::invalid_argument("unknown report format '" + std::string(name) +
                              "'");
}

void emit_report(std::span<const EfficiencyReport> reports, ReportFormat format,
                 std::ostream& out) {
  switch (format) {
    case ReportFormat::kCsv:
      out << "countermeasure,m,c,s,efficiency,keyspace_log2\n";
      for (const auto& r : reports) {
        out << r.countermeasure << ',' << format_double(r.m) << ','
            << format_double(r.c) << ',' << format_double(r.s) << ','
            << format_double(r.efficiency) << ','
            << format_double(r.keyspace_log2) << '\n';
      }
      break;
    case ReportFormat::kPlotData:
      out << "# series: slowdown\ncountermeasure,s\n";
      for (const auto& r : reports) {
        out << r.countermeasure << ',' << format_double(r.s) << '\n';
      }
      out << "\n# series: missing_bytes\ncountermeasure,m\n";
      for (const auto& r : reports) {
        out << r.countermeasure << ',' << format_double(r.m) << '\n';
      }
      break;
    case ReportFormat::kTable: {
      std::ostringstream buf;
      buf << std::left << std::setw(18) << "countermeasure" << std::right
          << std::setw(8) << "m" << std::setw(12) << "c" << std::setw(8) << "s"
          << std::setw(12) << "efficiency" << std::setw(15) << "log2(space)"
          << std::setw(14) << "search (s)" << '\n';
      buf << std::fixed;
      for (const auto& r : reports) {
        buf << std::left << std::setw(18) << r.countermeasure << std::right
            << std::setprecision(2) << std::setw(8) << r.m
            << std::setprecision(1) << std::setw(12) << r.c
            << std::setprecision(2) << std::setw(8) << r.s << std::setw(12)
            << r.efficiency << std::setw(15) << r.keyspace_log2
            << std::scientific << std::setprecision(3) << std::setw(14)
            << r.search_seconds << std::fixed << '\n';
      }
      out << buf.str();
      break;
    }
  }
}

std::vector<EfficiencyReport> read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) != "countermeasure,m,c,s,efficiency,keyspace_log2") {
    throw std::runtime_error("report csv: missing header");
  }
  std::vector<EfficiencyReport> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw std::runtime_error("report csv: bad row: " + line);
    EfficiencyReport r;
    r.countermeasure = std::string(trim(f[0]));
    r.m = parse_double(f[1]);
    r.c = parse_double(f[2]);
    r.s = parse_double(f[3]);
    r.efficiency = parse_double(f[4]);
    r.keyspace_log2 = parse_double(f[5]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ctlab
