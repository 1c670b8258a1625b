// Experiment orchestration: study and attack collection, correlation,
// candidate extraction, brute force, and the overhead/efficiency metrics
// that summarise a countermeasure (missing bytes m, cycles c, slowdown s,
// efficiency m / s).

#ifndef CTLAB_HARNESS_H_
#define CTLAB_HARNESS_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctlab/aes_core.h"
#include "ctlab/attack.h"
#include "ctlab/config.h"
#include "ctlab/countermeasures.h"
#include "ctlab/timing_channel.h"

namespace ctlab {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// c_variant / c_baseline; throws MetricError when c_baseline <= 0.
double slowdown(double c_variant, double c_baseline);
// m / s; throws MetricError when s <= 0.
double efficiency(double m, double s);

inline constexpr const char* kZeroEfficiencyCaveat =
    "efficiency 0: either no key byte was hidden (attack still viable) or "
    "the slowdown is unbounded; inspect keyspace_log2 before concluding";
inline constexpr const char* kHardwareMarker =
    "hardware-specific measurement, not an acceptance target";

struct ExperimentConfig {
  CountermeasureKind countermeasure = CountermeasureKind::kNone;
  Backend backend = Backend::kSimulated;
  SimulationConfig sim;
  std::size_t packet_size = 800;
  TimingScope timing_scope = TimingScope::kEncryptOnly;
  std::uint64_t samples_study = 1 << 16;
  std::uint64_t samples_attack = 1 << 16;
  double retention = 1.0;
  std::uint64_t seed = 1;
  Key128 study_key;
  Key128 attack_key;
  unsigned runs = 5;
  bool search = true;
  // Brute force only runs when the reduced space is at most this large.
  double search_max_keyspace = 1 << 26;
  unsigned search_threads = 1;
  double alpha = 2.4e-8;

  ExperimentConfig();

  // Server-side configuration for one phase; identical for study and
  // attack apart from the key.
  ChannelConfig study_channel(unsigned run) const;
  ChannelConfig attack_channel(unsigned run) const;
};

// Reads every recognised key; throws ConfigError on unknown keys or bad
// values.
ExperimentConfig experiment_config_from(const ConfigMap& map);
void apply_channel_keys(const ConfigMap& map, ChannelConfig& channel);
void apply_simulation_keys(const ConfigMap& map, SimulationConfig& sim);

class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ConfigMismatch unless the configs agree on everything but the key.
void check_phase_configs(const ChannelConfig& study,
                         const ChannelConfig& attack);

// Seed for (run, purpose), derived with splitmix64.
std::uint64_t derive_seed(std::uint64_t base, unsigned run,
                          std::uint64_t purpose);

struct EfficiencyReport {
  std::string countermeasure;
  double m = 0;
  double c = 0;
  double s = 0;
  double efficiency = 0;
  double keyspace_log2 = 0;
  double search_seconds = 0;

  friend bool operator==(const EfficiencyReport&, const EfficiencyReport&) =
      default;
};

enum class Stage { kBaseline, kStudy, kAttack, kCorrelate, kSearch, kComplete };
std::string_view to_string(Stage stage);

struct RunResult {
  int m = 0;
  double c = 0;
  double c_baseline = 0;
  double keyspace_log2 = 0;
  bool searched = false;
  std::optional<Key128> recovered;
  std::uint64_t keys_tested = 0;
};

struct ExperimentReport {
  EfficiencyReport summary;
  std::vector<RunResult> runs;
  Stage stage = Stage::kComplete;
  std::string error;
  std::vector<std::string> notes;
  CandidateSets last_candidates;

  bool ok() const { return stage == Stage::kComplete; }
  // Every run searched and recovered the attack key.
  bool key_recovered(const Key128& attack_key) const;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

enum class ReportFormat { kTable, kCsv, kPlotData };
ReportFormat parse_report_format(std::string_view name);

// csv columns: countermeasure,m,c,s,efficiency,keyspace_log2
void emit_report(std::span<const EfficiencyReport> reports, ReportFormat format,
                 std::ostream& out);
std::vector<EfficiencyReport> read_report_csv(std::istream& in);

}  // namespace ctlab

#endif  // CTLAB_HARNESS_H_
