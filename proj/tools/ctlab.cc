// ctlab: command-line front end for the cache-timing lab.
//
//   ctlab serve       run the UDP timing server
//   ctlab collect     gather a timing profile (remote server or in-process)
//   ctlab correlate   study + attack profiles -> candidate sets
//   ctlab search      brute force over candidate sets
//   ctlab experiment  full study/attack/correlate/search pipeline
//   ctlab bench-rate  search-rate benchmark and linear fit
//   ctlab report      re-emit report csv files
//
// Every verb accepts --config <file> and repeatable --set key=value; named
// flags override both. Exit status is 0 only when the verb fully succeeded.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ctlab/attack.h"
#include "ctlab/config.h"
#include "ctlab/harness.h"
#include "ctlab/hex.h"
#include "ctlab/keysearch.h"
#include "ctlab/text.h"
#include "ctlab/timing_channel.h"

using namespace ctlab;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config file, then --set, then named flags.
struct ConfigInputs {
  std::string file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;

  void add_to(CLI::App* app) {
    app->add_option("--config", file, "flat key = value config file");
    app->add_option("--set", sets, "override one config key (key=value)");
  }

  // Registers a named flag that writes config key `key`.
  CLI::Option* flag(CLI::App* app, const std::string& name,
                    const std::string& key, const std::string& help) {
    return app
        ->add_option_function<std::string>(
            name, [this, key](const std::string& v) { flags.emplace_back(key, v); },
            help);
  }

  ConfigMap build() const {
    ConfigMap map;
    if (!file.empty()) map = ConfigMap::load(file);
    for (const std::string& kv : sets) map.set_assignment(kv);
    for (const auto& [k, v] : flags) map.set(k, v);
    return map;
  }
};

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw UsageError("expected host:port, got " + text);
  const std::uint64_t port = parse_u64(text.substr(colon + 1));
  if (port == 0 || port > 65535) throw UsageError("bad port in " + text);
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

// Retries a ciphertext query until the server answers or `patience` passes.
void wait_for_server(TimingClient& client, std::chrono::milliseconds patience) {
  const auto deadline = std::chrono::steady_clock::now() + patience;
  while (true) {
    try {
      client.ciphertext_query(Block{});
      return;
    } catch (const TimeoutError&) {
      if (std::chrono::steady_clock::now() >= deadline) {
        throw std::runtime_error("timing server did not answer");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }
}

// ---- serve -----------------------------------------------------------------

struct ServeArgs {
  ConfigInputs cfg;
  double duration = 0;
};

int run_serve(const ServeArgs& args) {
  ConfigMap map = args.cfg.build();
  if (const char* env = std::getenv("PORT"); env && *env) map.set("port", env);
  ChannelConfig ch;
  apply_channel_keys(map, ch);
  if (!map.contains("key")) throw UsageError("serve needs --key");
  if (ch.backend == Backend::kNative) std::cerr << "ctlab: " << kHardwareMarker << '\n';

  UdpTimingServer server(ch);
  std::cout << "listening " << ch.address << ':' << server.port()
            << " countermeasure=" << to_string(ch.countermeasure)
            << " backend=" << to_string(ch.backend) << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
  std::jthread worker([&](std::stop_token st) { server.run(st); });
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    if (args.duration > 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count() >= args.duration) {
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  worker.request_stop();
  worker.join();
  std::cout << "served " << server.served() << " dropped " << server.dropped()
            << std::endl;
  return 0;
}

// ---- collect ---------------------------------------------------------------

struct CollectArgs {
  ConfigInputs cfg;
  std::string server;
  std::string out;
  std::uint64_t timeout_ms = 500;
};

int run_collect(const CollectArgs& args) {
  const ConfigMap map = args.cfg.build();
  ChannelConfig ch;
  apply_channel_keys(map, ch);
  const ExperimentConfig exp = experiment_config_from(map);
  CollectOptions opts{exp.samples_attack, exp.seed};

  CollectResult result;
  std::uint64_t timeouts = 0;
  try {
    if (!args.server.empty()) {
      const auto [host, port] = parse_endpoint(args.server);
      TimingClient client(host, port, std::chrono::milliseconds(args.timeout_ms));
      wait_for_server(client, std::chrono::seconds(5));
      result = collect_profile(
          [&](const Block& pt) { return client.measure_once(pt, ch.packet_size).cycles; },
          opts);
      timeouts = client.timeouts();
    } else {
      if (!map.contains("key")) throw UsageError("in-process collect needs --key");
      EncryptionService service(ch);
      result = collect_profile(
          [&](const Block& pt) { return service.time_encryption(pt).cycles; }, opts);
    }
  } catch (const CollectionError& e) {
    if (!args.out.empty()) {
      std::ofstream out = open_out(args.out + ".partial");
      e.partial().profile.write_csv(out);
    }
    throw;
  }
  if (!args.out.empty()) {
    std::ofstream out = open_out(args.out);
    result.profile.write_csv(out);
  }
  std::cout << "samples " << result.profile.samples() << "\nfailures "
            << result.failures << "\ntimeouts " << timeouts << "\ncycles_mean "
            << format_double(result.cycles_mean) << '\n';
  return 0;
}

// ---- correlate -------------------------------------------------------------

struct CorrelateArgs {
  std::string study;
  std::string attack;
  std::string study_key;
  std::string true_key;
  double retention = 1.0;
  std::string out;
};

int run_correlate(const CorrelateArgs& args) {
  std::ifstream study_in = open_in(args.study);
  std::ifstream attack_in = open_in(args.attack);
  const TimingProfile study = TimingProfile::read_csv(study_in);
  const TimingProfile attack = TimingProfile::read_csv(attack_in);
  const Correlation c =
      correlate(signature(study), parse_key(args.study_key), signature(attack));
  const CandidateSets cands = candidate_sets(c, args.retention);
  if (!args.out.empty()) {
    std::ofstream out = open_out(args.out);
    cands.write_csv(out);
  }
  std::cout << "keyspace_log2 " << format_double(keyspace_log2(cands))
            << "\nkeyspace " << keyspace_size(cands) << '\n';
  for (int j = 0; j < kPositions; ++j) {
    std::cout << "position " << j << " candidates " << cands.positions[j].size()
              << " best " << int{cands.positions[j].front().value} << '\n';
  }
  if (!args.true_key.empty()) {
    std::cout << "missing_bytes " << missing_bytes(cands, parse_key(args.true_key))
              << '\n';
  }
  return 0;
}

// ---- search ----------------------------------------------------------------

struct SearchArgs {
  std::string candidates;
  std::vector<std::string> pairs;
  std::string server;
  unsigned verify_pairs = 2;
  unsigned threads = 1;
  std::string order = "score";
  std::uint64_t seed = 1;
};

int run_search(const SearchArgs& args) {
  std::ifstream in = open_in(args.candidates);
  const CandidateSets cands = CandidateSets::read_csv(in);
  std::vector<KnownPair> pairs;
  for (const std::string& p : args.pairs) pairs.push_back(parse_pair(p));
  if (!args.server.empty()) {
    const auto [host, port] = parse_endpoint(args.server);
    TimingClient client(host, port, std::chrono::milliseconds(500));
    wait_for_server(client, std::chrono::seconds(5));
    PlaintextGenerator gen(args.seed);
    for (unsigned i = 0; i < args.verify_pairs; ++i) {
      KnownPair p;
      p.pt = gen.next();
      p.ct = client.ciphertext_query(p.pt);
      pairs.push_back(p);
    }
  }
  if (pairs.empty()) throw UsageError("search needs --pair or --server");

  SearchOptions opts;
  opts.threads = args.threads;
  opts.order = parse_search_order(args.order);
  std::cout << "keyspace " << keyspace_size(cands) << std::endl;
  const SearchOutcome r = brute_force(cands, pairs, opts);
  std::cout << "found " << (r.found ? to_hex(*r.found) : std::string("none"))
            << "\nkeys_tested " << r.keys_tested << "\nelapsed "
            << format_double(r.elapsed) << '\n';
  if (r.found && !r.confirmed) {
    std::cerr << "ctlab: warning: key verified by a single pair only\n";
  }
  return r.found ? 0 : 1;
}

// ---- experiment ------------------------------------------------------------

struct ExperimentArgs {
  ConfigInputs cfg;
  std::string out;
  std::string format = "table";
  std::string candidates_out;
  bool require_recovery = false;
};

int run_experiment_verb(const ExperimentArgs& args) {
  const ConfigMap map = args.cfg.build();
  std::vector<CountermeasureKind> kinds;
  const auto which = map.get("countermeasure");
  ConfigMap base = map;
  if (which && *which == "all") {
    kinds.assign(kAllCountermeasures.begin(), kAllCountermeasures.end());
    base.set("countermeasure", "none");
  }
  ExperimentConfig cfg = experiment_config_from(base);
  if (kinds.empty()) kinds.push_back(cfg.countermeasure);

  bool ok = true;
  std::vector<EfficiencyReport> summaries;
  for (CountermeasureKind kind : kinds) {
    cfg.countermeasure = kind;
    const ExperimentReport r = run_experiment(cfg);
    for (const std::string& note : r.notes) {
      std::cerr << "ctlab: " << to_string(kind) << ": " << note << '\n';
    }
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
      const RunResult& run = r.runs[i];
      std::cerr << "ctlab: " << to_string(kind) << " run " << i << ": m=" << run.m
                << " keyspace_log2=" << format_double(run.keyspace_log2)
                << " recovered="
                << (run.searched ? (run.recovered ? to_hex(*run.recovered) : "none")
                                 : "not searched")
                << '\n';
    }
    if (!r.ok()) {
      std::cerr << "ctlab: " << to_string(kind) << " failed at stage "
                << to_string(r.stage) << ": " << r.error << '\n';
      ok = false;
    }
    if (args.require_recovery && !r.key_recovered(cfg.attack_key)) {
      std::cerr << "ctlab: " << to_string(kind) << ": attack key not recovered\n";
      ok = false;
    }
    if (!args.candidates_out.empty() && kinds.size() == 1) {
      std::ofstream out = open_out(args.candidates_out);
      r.last_candidates.write_csv(out);
    }
    summaries.push_back(r.summary);
  }
  const ReportFormat format = parse_report_format(args.format);
  emit_report(summaries, format, std::cout);
  if (!args.out.empty()) {
    std::ofstream out = open_out(args.out);
    emit_report(summaries, ReportFormat::kCsv, out);
  }
  return ok ? 0 : 1;
}

// ---- bench-rate ------------------------------------------------------------

struct BenchArgs {
  std::string sizes = "1e5,1e6,1e7";
  unsigned threads = 1;
  double min_size = 0;
};

int run_bench(const BenchArgs& args) {
  std::vector<double> sizes;
  for (std::string_view s : split(args.sizes, ',')) sizes.push_back(parse_double(trim(s)));
  const auto points = measure_search_rate(sizes, args.threads);
  std::cout << "keyspace,seconds\n";
  for (const FitPoint& p : points) {
    std::cout << format_double(p.keyspace) << ',' << format_double(p.seconds) << '\n';
  }
  const double alpha = fit_rate(points, args.min_size);
  std::cout << "alpha " << format_double(alpha) << "\nr_squared "
            << format_double(fit_r_squared(points, alpha, args.min_size))
            << "\nestimate_2^128_seconds "
            << format_double(estimate_search_time(BigInt(1) << 128, alpha)) << '\n';
  std::cerr << "ctlab: " << kHardwareMarker << '\n';
  return 0;
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string format = "table";
};

int run_report(const ReportArgs& args) {
  std::vector<EfficiencyReport> all;
  for (const std::string& path : args.inputs) {
    std::ifstream in = open_in(path);
    for (auto& r : read_report_csv(in)) all.push_back(std::move(r));
  }
  emit_report(all, parse_report_format(args.format), std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cache-timing AES lab"};
  app.require_subcommand(1);

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "run the UDP timing server");
  serve.cfg.add_to(s);
  serve.cfg.flag(s, "--key", "key", "server secret key (hex32)");
  serve.cfg.flag(s, "--countermeasure", "countermeasure", "countermeasure kind");
  serve.cfg.flag(s, "--backend", "backend", "native|simulated");
  serve.cfg.flag(s, "--packet-size", "packet_size", "request size in bytes");
  serve.cfg.flag(s, "--port", "port", "UDP port (PORT env var overrides)");
  serve.cfg.flag(s, "--address", "address", "listen address");
  serve.cfg.flag(s, "--timing-scope", "timing_scope", "encrypt_only|whole_handler");
  serve.cfg.flag(s, "--seed", "seed", "countermeasure PRNG seed");
  s->add_option("--duration", serve.duration, "stop after this many seconds");

  CollectArgs collect;
  auto* c = app.add_subcommand("collect", "gather a timing profile");
  collect.cfg.add_to(c);
  c->add_option("--server", collect.server, "host:port of a running server");
  c->add_option("--out", collect.out, "profile csv");
  c->add_option("--timeout-ms", collect.timeout_ms, "per-request timeout");
  collect.cfg.flag(c, "--samples", "samples", "number of samples");
  collect.cfg.flag(c, "--seed", "seed", "plaintext (and in-process server) seed");
  collect.cfg.flag(c, "--packet-size", "packet_size", "request size in bytes");
  collect.cfg.flag(c, "--key", "key", "in-process server key (hex32)");
  collect.cfg.flag(c, "--countermeasure", "countermeasure", "in-process countermeasure");
  collect.cfg.flag(c, "--backend", "backend", "in-process backend");

  CorrelateArgs corr;
  auto* r = app.add_subcommand("correlate", "derive candidate sets");
  r->add_option("--study", corr.study, "study profile csv")->required();
  r->add_option("--attack", corr.attack, "attack profile csv")->required();
  r->add_option("--study-key", corr.study_key, "key used for the study profile")
      ->required();
  r->add_option("--retention", corr.retention, "lambda for candidate retention");
  r->add_option("--out", corr.out, "candidate csv");
  r->add_option("--true-key", corr.true_key, "evaluation only: report missing bytes");

  SearchArgs search;
  auto* k = app.add_subcommand("search", "brute force the reduced key space");
  k->add_option("--candidates", search.candidates, "candidate csv")->required();
  k->add_option("--pair", search.pairs, "known pair pt_hex:ct_hex (repeatable)");
  k->add_option("--server", search.server, "fetch verification pairs from host:port");
  k->add_option("--verify-pairs", search.verify_pairs, "pairs to fetch from --server");
  k->add_option("--threads", search.threads, "worker threads");
  k->add_option("--order", search.order, "score|lex");
  k->add_option("--seed", search.seed, "seed for fetched plaintexts");

  ExperimentArgs exp;
  auto* e = app.add_subcommand("experiment", "run the full attack pipeline");
  exp.cfg.add_to(e);
  exp.cfg.flag(e, "--countermeasure", "countermeasure", "kind, or 'all'");
  exp.cfg.flag(e, "--backend", "backend", "native|simulated");
  exp.cfg.flag(e, "--samples", "samples", "samples per phase");
  exp.cfg.flag(e, "--runs", "runs", "runs to average");
  exp.cfg.flag(e, "--retention", "retention", "lambda for candidate retention");
  exp.cfg.flag(e, "--seed", "seed", "base seed");
  exp.cfg.flag(e, "--packet-size", "packet_size", "request size in bytes");
  e->add_option("--out", exp.out, "report csv");
  e->add_option("--format", exp.format, "table|csv|plotdata");
  e->add_option("--candidates-out", exp.candidates_out, "last run's candidate csv");
  e->add_flag("--require-recovery", exp.require_recovery,
              "fail unless every run recovers the attack key");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench-rate", "measure brute-force speed");
  b->add_option("--sizes", bench.sizes, "comma-separated key-space sizes");
  b->add_option("--threads", bench.threads, "worker threads");
  b->add_option("--min-size", bench.min_size, "fit threshold");

  ReportArgs report;
  auto* p = app.add_subcommand("report", "re-emit report csv files");
  p->add_option("--in", report.inputs, "report csv (repeatable)")->required();
  p->add_option("--format", report.format, "table|csv|plotdata");

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return run_serve(serve);
    if (c->parsed()) return run_collect(collect);
    if (r->parsed()) return run_correlate(corr);
    if (k->parsed()) return run_search(search);
    if (e->parsed()) return run_experiment_verb(exp);
    if (b->parsed()) return run_bench(bench);
    if (p->parsed()) return run_report(report);
  } catch (const UsageError& err) {
    std::cerr << "ctlab: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "ctlab: " << err.what() << '\n';
    return 1;
  }
  return 2;
}
