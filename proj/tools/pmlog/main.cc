// pmlog: crash-test, window-distribution, benchmark and scenario driver.
// Exit status: 0 all checks held, 1 a check failed, 2 usage or setup error.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "pmlog/harness/crashtest.h"
#include "pmlog/harness/scenario.h"
#include "pmlog/harness/workloads.h"
#include "pmlog/log/config.h"

namespace {

using namespace pmlog;

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  uint64_t trials = 0;
  uint32_t threads = 0;
  uint64_t freq = 0;
  uint64_t record_size = 0;
  std::string out;
};

void AddCommon(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "TOML file ([log]/[policy] keys, or a scenario)");
  app->add_option("--seed", c.seed, "base seed");
  app->add_option("--trials", c.trials, "trial or seed count");
  app->add_option("--threads", c.threads, "writer threads");
  app->add_option("--freq", c.freq, "force frequency F");
  app->add_option("--record-size", c.record_size, "record payload bytes");
  app->add_option("--out", c.out, "CSV output path (default: stdout)");
}

// Returns a stream for CSV rows; stdout when no path was given.
std::ostream* OpenOut(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
  if (path.empty() || path == "-") return &std::cout;
  holder = std::make_unique<std::ofstream>(path);
  if (!*holder) return nullptr;
  return holder.get();
}

// Summary lines go to stderr when CSV goes to stdout.
std::ostream& Info(const Common& c) { return c.out.empty() || c.out == "-" ? std::cerr : std::cout; }

std::optional<log::LogConfig> LoadConfig(const Common& c) {
  if (c.config.empty()) return log::LogConfig{};
  auto cfg = log::LoadLogConfig(c.config);
  if (!cfg.ok()) {
    std::cerr << "config: " << cfg.status().ToString() << "\n";
    return std::nullopt;
  }
  return *cfg;
}

int CrashTest(const Common& c, bool mutate, uint64_t capacity, uint32_t ops) {
  auto cfg = LoadConfig(c);
  if (!cfg) return 2;
  harness::CrashTestOptions o;
  o.seed = c.seed.value_or(1);
  o.trials = c.trials ? c.trials : 1000;
  if (c.threads) o.max_writers = c.threads;
  if (c.record_size) o.min_record = o.max_record = c.record_size;
  if (c.freq) {
    o.frequency = c.freq;
  } else if (!c.config.empty() && cfg->policy.kind == log::ForcePolicy::Kind::kFrequency) {
    o.frequency = cfg->policy.frequency;
  }
  o.capacity = capacity;
  o.ops_per_writer = ops;
  o.skip_payload_crc = mutate;
  std::unique_ptr<std::ofstream> f;
  std::ostream* os = OpenOut(c.out, f);
  if (!os) {
    std::cerr << "cannot open " << c.out << "\n";
    return 2;
  }
  harness::WriteTrialCsvHeader(*os);
  auto sum = harness::RunCrashTest(o, [&](const harness::TrialReport& r) { harness::WriteTrialCsv(*os, r); });
  auto& info = Info(c);
  info << "crashtest: " << sum.trials << " trials, " << sum.failures << " violations\n";
  if (sum.first_failing_seed) {
    info << "reproduce: pmlog crashtest --seed " << *sum.first_failing_seed << " --trials 1"
         << (mutate ? " --mutate-skip-crc" : "") << "\n";
  }
  return sum.failures ? 1 : 0;
}

int WindowDist(const Common& c, uint64_t ops, uint32_t crashes) {
  auto cfg = LoadConfig(c);
  if (!cfg) return 2;
  harness::WindowOptions o;
  if (!c.config.empty() && cfg->policy.kind == log::ForcePolicy::Kind::kFrequency) {
    o.frequency = cfg->policy.frequency;
    o.threads = static_cast<uint32_t>(cfg->policy.max_threads);
  }
  if (c.freq) o.frequency = c.freq;
  if (c.threads) o.threads = c.threads;
  if (c.record_size) o.record_size = c.record_size;
  o.seed = c.seed.value_or(1);
  o.ops_per_writer = ops;
  o.crashes = crashes;
  auto r = harness::RunWindowDistribution(o);
  std::unique_ptr<std::ofstream> f;
  std::ostream* os = OpenOut(c.out, f);
  if (!os) {
    std::cerr << "cannot open " << c.out << "\n";
    return 2;
  }
  harness::WriteWindowCsv(*os, r);
  auto& info = Info(c);
  info << "windowdist F=" << o.frequency << " T=" << o.threads << ": samples=" << r.samples << " max=" << r.max
       << " bound=" << r.bound << " mean=" << std::fixed << std::setprecision(2) << r.mean << " p50=" << r.p50
       << " p99=" << r.p99 << " below_half=" << r.below_half << " crashes=" << r.crashes
       << " max_lost=" << r.max_lost << "\n";
  if (r.errors) info << "windowdist: " << r.errors << " log errors\n";
  return (r.errors || r.max > r.bound || r.lost_over_bound) ? 1 : 0;
}

int Bench(const Common& c, const std::string& policy, uint64_t group, uint64_t duration_ms, uint64_t line_ns,
          uint64_t fence_ns) {
  auto cfg = LoadConfig(c);
  if (!cfg) return 2;
  harness::BenchOptions o;
  if (c.threads) o.threads = c.threads;
  if (c.record_size) o.record_size = c.record_size;
  o.seed = c.seed.value_or(1);
  o.duration_ms = duration_ms;
  o.persist_line_ns = line_ns;
  o.persist_fence_ns = fence_ns;
  if (policy.empty() && !c.config.empty()) {
    o.policy = cfg->policy;
  } else {
    auto p = log::ParsePolicy(policy.empty() ? "frequency" : policy, c.freq ? c.freq : 8, o.threads, group);
    if (!p.ok()) {
      std::cerr << "policy: " << p.status().ToString() << "\n";
      return 2;
    }
    o.policy = *p;
  }
  std::unique_ptr<std::ofstream> f;
  std::ostream* os = OpenOut(c.out, f);
  if (!os) {
    std::cerr << "cannot open " << c.out << "\n";
    return 2;
  }
  auto r = harness::RunBench(o);
  harness::WriteBenchCsvHeader(*os);
  harness::WriteBenchCsv(*os, r);
  Info(c) << "bench " << r.policy << ": " << std::fixed << std::setprecision(0) << r.ops_per_sec
          << " appends/s, violations=" << r.violations << "\n";
  return r.violations ? 1 : 0;
}

int Scenario(const Common& c, bool fuzz, uint32_t rounds) {
  std::unique_ptr<std::ofstream> f;
  if (fuzz) {
    harness::FuzzOptions o;
    o.seed = c.seed.value_or(1);
    o.seeds = c.trials ? c.trials : 1000;
    o.rounds = rounds;
    std::ostream* os = OpenOut(c.out, f);
    if (!os) {
      std::cerr << "cannot open " << c.out << "\n";
      return 2;
    }
    harness::WriteFuzzCsvHeader(*os);
    const bool single = o.seeds == 1;
    auto sum = harness::RunScenarioFuzz(o, [&](const harness::FuzzCase& fc) {
      harness::WriteFuzzCsv(*os, fc);
      if (single) {
        for (auto& line : fc.trace) Info(c) << "  " << line << "\n";
      }
    });
    auto& info = Info(c);
    info << "fuzz: " << sum.cases << " schedules, " << sum.failures << " violations, " << sum.interrupted_recoveries
         << " interrupted recoveries\n";
    if (sum.first_failing_seed) info << "reproduce: pmlog scenario --fuzz --seed " << *sum.first_failing_seed
                                     << " --trials 1\n";
    return sum.failures ? 1 : 0;
  }
  if (c.config.empty()) {
    std::cerr << "scenario needs --config <file.toml> or --fuzz\n";
    return 2;
  }
  auto r = harness::RunScenarioFile(c.config, c.seed);
  if (!r.ok()) {
    std::cerr << "scenario: " << r.status().ToString() << "\n";
    return 2;
  }
  std::ostream* os = OpenOut(c.out, f);
  if (!os) {
    std::cerr << "cannot open " << c.out << "\n";
    return 2;
  }
  for (auto& line : r->trace) *os << line << "\n";
  *os << (r->pass ? "PASS " : "FAIL ") << r->name << (r->pass ? "" : ": " + r->failure) << "\n";
  return r->pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"replicated persistent-memory log: crash tests, window distribution, benchmarks, scenarios"};
  app.require_subcommand(1);

  Common ct, wd, bn, sc;
  bool mutate = false;
  uint64_t capacity = 32 * 1024;
  uint32_t ops = 12;
  auto* crash = app.add_subcommand("crashtest", "randomized crash trials against the commit-prefix property");
  AddCommon(crash, ct);
  crash->add_flag("--mutate-skip-crc", mutate, "harness self-test: complete() leaves payload CRCs zero");
  crash->add_option("--capacity", capacity, "log bytes per trial");
  crash->add_option("--ops", ops, "appends per writer");

  uint64_t wops = 500;
  uint32_t crashes = 200;
  auto* window = app.add_subcommand("windowdist", "sample the completed-but-unforced window under Frequency(F)");
  AddCommon(window, wd);
  window->add_option("--ops", wops, "appends per writer");
  window->add_option("--crashes", crashes, "power failures injected at random points");

  std::string policy;
  uint64_t group = 128, duration = 1000, line_ns = 100, fence_ns = 100;
  auto* bench = app.add_subcommand("bench", "append throughput and latency on real threads");
  AddCommon(bench, bn);
  bench->add_option("--policy", policy, "sync | frequency | group");
  bench->add_option("--group", group, "group-commit window size");
  bench->add_option("--duration-ms", duration, "run length");
  bench->add_option("--persist-line-ns", line_ns, "emulated flush cost per cache line");
  bench->add_option("--persist-fence-ns", fence_ns, "emulated cost per persist barrier");

  bool fuzz = false;
  uint32_t rounds = 3;
  auto* scen = app.add_subcommand("scenario", "replay a TOML fault scenario, or fuzz seeded fault schedules");
  AddCommon(scen, sc);
  scen->add_flag("--fuzz", fuzz, "run --trials seeded fault schedules instead of a file");
  scen->add_option("--rounds", rounds, "fail-over rounds per fuzz schedule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*crash) return CrashTest(ct, mutate, capacity, ops);
  if (*window) return WindowDist(wd, wops, crashes);
  if (*bench) return Bench(bn, policy, group, duration, line_ns, fence_ns);
  return Scenario(sc, fuzz, rounds);
}
