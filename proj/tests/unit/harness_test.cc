#include <gtest/gtest.h>

#include <chrono>
#include <sstream>

#include "pmlog/harness/crashtest.h"
#include "pmlog/harness/fiber.h"
#include "pmlog/harness/scenario.h"
#include "pmlog/harness/workloads.h"
#include "pmlog/pmem/region.h"

namespace pmlog::harness {
namespace {

size_t Columns(const std::string& line) { return static_cast<size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

std::vector<std::string> Lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(MixSeedTest, MatchesSplitMix64) {
  // First two outputs of splitmix64 seeded with 0, from its reference code.
  EXPECT_EQ(MixSeed(0), 0xE220A8397B1DCDAFull);
  EXPECT_EQ(MixSeed(0x9E3779B97F4A7C15ull), 0x6E789E6AA1B965F4ull);
}

TEST(FiberTest, SameSeedSameInterleaving) {
  auto run = [](uint64_t seed) {
    FiberScheduler s(seed);
    std::vector<int> order;
    for (int f = 0; f < 4; ++f) {
      s.Spawn([&, f] {
        for (int i = 0; i < 20; ++i) {
          order.push_back(f);
          s.Yield();
        }
      });
    }
    s.Run();
    return order;
  };
  auto a = run(3), b = run(3), c = run(4);
  EXPECT_EQ(a.size(), 80u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(CrashTestHarness, SameSeedGivesIdenticalReport) {
  CrashTestOptions o;
  o.seed = 42;
  o.trials = 40;
  auto csv = [&] {
    std::ostringstream os;
    WriteTrialCsvHeader(os);
    auto sum = RunCrashTest(o, [&](const TrialReport& r) { WriteTrialCsv(os, r); });
    EXPECT_EQ(sum.failures, 0u);
    return os.str();
  };
  std::string a = csv(), b = csv();
  EXPECT_EQ(a, b);
  auto lines = Lines(a);
  ASSERT_EQ(lines.size(), 41u);
  for (auto& l : lines) EXPECT_EQ(Columns(l), Columns(lines[0])) << l;
}

TEST(CrashTestHarness, SingleTrialReproducesFromReportedSeed) {
  CrashTestOptions o;
  o.seed = 9;
  o.trials = 10;
  std::vector<TrialReport> all;
  RunCrashTest(o, [&](const TrialReport& r) { all.push_back(r); });
  ASSERT_EQ(all.size(), 10u);
  const auto& r7 = all[7];
  CrashTestOptions one = o;
  one.seed = r7.seed;
  one.trials = 1;
  std::vector<TrialReport> again;
  RunCrashTest(one, [&](const TrialReport& r) { again.push_back(r); });
  ASSERT_EQ(again.size(), 1u);
  EXPECT_EQ(again[0].crash_point, r7.crash_point);
  EXPECT_EQ(again[0].forced_lsn, r7.forced_lsn);
  EXPECT_EQ(again[0].recovered_tail_lsn, r7.recovered_tail_lsn);
  EXPECT_EQ(again[0].policy, r7.policy);
}

TEST(CrashTestHarness, MutationKnobIsCaught) {
  CrashTestOptions o;
  o.seed = 5;
  o.trials = 60;
  o.skip_payload_crc = true;
  auto sum = RunCrashTest(o, nullptr);
  EXPECT_GT(sum.failures, 0u);
  ASSERT_TRUE(sum.first_failing_seed.has_value());
  o.skip_payload_crc = false;
  EXPECT_EQ(RunCrashTest(o, nullptr).failures, 0u);
}

TEST(CrashTestHarness, CoversBothPoliciesAndManyWriters) {
  CrashTestOptions o;
  o.seed = 77;
  o.trials = 120;
  std::set<std::string> kinds;
  uint32_t max_w = 0;
  uint64_t forced = 0;
  RunCrashTest(o, [&](const TrialReport& r) {
    kinds.insert(r.policy == "sync" ? "sync" : r.policy.substr(0, 9));
    max_w = std::max(max_w, r.writers);
    forced += r.forced_lsn > 0;
  });
  EXPECT_EQ(kinds, (std::set<std::string>{"sync", "frequency"}));
  EXPECT_GE(max_w, 12u);
  EXPECT_GT(forced, 60u);
}

TEST(WindowTest, SingleWriterFrequencyOneNeverExceedsOne) {
  WindowOptions o;
  o.frequency = 1;
  o.threads = 1;
  o.ops_per_writer = 300;
  o.crashes = 40;
  auto r = RunWindowDistribution(o);
  EXPECT_EQ(r.errors, 0u);
  EXPECT_EQ(r.bound, 1u);
  EXPECT_LE(r.max, 1u);
  EXPECT_LE(r.max_lost, 1u);
  EXPECT_GT(r.crashes, 0u);
}

TEST(WindowTest, BoundHoldsAndIsDeterministic) {
  WindowOptions o;
  o.frequency = 2;
  o.threads = 3;
  o.ops_per_writer = 200;
  o.crashes = 50;
  o.seed = 11;
  auto a = RunWindowDistribution(o), b = RunWindowDistribution(o);
  EXPECT_EQ(a.bound, 6u);
  EXPECT_LE(a.max, 6u);
  EXPECT_EQ(a.lost_over_bound, 0u);
  EXPECT_EQ(a.histogram, b.histogram);
  EXPECT_EQ(a.max_lost, b.max_lost);
  std::ostringstream os;
  WriteWindowCsv(os, a);
  auto lines = Lines(os.str());
  EXPECT_EQ(lines[0], "window,count");
  EXPECT_EQ(lines.size(), a.histogram.size() + 1);
}

TEST(BenchTest, ShortRunHasStableSchemaAndNoViolations) {
  for (auto p : {log::ForcePolicy::Sync(), log::ForcePolicy::Frequency(4, 2), log::ForcePolicy::GroupCommit(16)}) {
    BenchOptions o;
    o.policy = p;
    o.threads = 2;
    o.duration_ms = 50;
    o.capacity = 1 << 20;
    auto r = RunBench(o);
    EXPECT_EQ(r.violations, 0u) << p.ToString();
    EXPECT_GT(r.ops, 0u);
    std::ostringstream os;
    WriteBenchCsvHeader(os);
    WriteBenchCsv(os, r);
    auto lines = Lines(os.str());
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0], "policy,threads,record_size,ops,seconds,ops_per_sec,mean_us,p50_us,p99_us,p999_us,events,violations");
    EXPECT_EQ(Columns(lines[1]), Columns(lines[0]));
    EXPECT_EQ(lines[1].rfind(p.ToString() + ",", 0), 0u);
  }
}

TEST(PersistLatencyTest, PersistWaitsForModeledCost) {
  pmem::PersistenceRegion r(4096);
  r.SetPersistLatency(50000, 100000);  // 4 lines: 300 us total
  ASSERT_TRUE(r.Store(0, Bytes(256, 1)).ok());
  auto t0 = std::chrono::steady_clock::now();
  ASSERT_TRUE(r.Persist(0, 256).ok());
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::microseconds(300));
  EXPECT_FALSE(r.IsDirty(0));
}

// ---- scenarios ----

TEST(ScenarioTest, ShippedScenariosPass) {
  for (const char* name : {"diverging_history", "quorum_failure"}) {
    auto r = RunScenarioFile(std::string(PMLOG_SOURCE_DIR) + "/scenarios/" + name + ".toml");
    ASSERT_TRUE(r.ok()) << r.status().ToString();
    EXPECT_TRUE(r->pass) << name << ": " << r->failure;
    EXPECT_EQ(r->name, name);
    EXPECT_FALSE(r->trace.empty());
  }
}

constexpr const char* kTiny = R"(
[scenario]
name = "tiny"
[log]
capacity = 8192
mode = "local+remote"
replicas = 3
write_quorum = 2
)";

TEST(ScenarioTest, WrongExpectationFailsTheRun) {
  auto r = RunScenarioText(std::string(kTiny) + R"(
[[step]]
op = "create"
[[step]]
op = "append"
payload = "a"
expect = "QuorumFailure"
)");
  ASSERT_TRUE(r.ok()) << r.status().ToString();
  EXPECT_FALSE(r->pass);
  EXPECT_NE(r->failure.find("step 1"), std::string::npos);
}

TEST(ScenarioTest, ExpectCodesIgnoreCaseAndUnderscores) {
  auto r = RunScenarioText(std::string(kTiny) + R"(
[[step]]
op = "create"
[[step]]
op = "partition"
a = 0
b = 1
[[step]]
op = "partition"
a = 0
b = 2
[[step]]
op = "append"
payload = "a"
expect = "quorum_failure"
[[step]]
op = "append"
payload = "b"
expect = "QUORUMFAILURE"
)");
  ASSERT_TRUE(r.ok()) << r.status().ToString();
  EXPECT_TRUE(r->pass) << r->failure;
}

TEST(ScenarioTest, MalformedInputIsRejected) {
  EXPECT_EQ(RunScenarioText("not = [toml").status().code(), StatusCode::kInvalidArgument);
  EXPECT_EQ(RunScenarioText(kTiny).status().code(), StatusCode::kInvalidArgument);  // no steps
  auto bad = RunScenarioText(std::string(kTiny) + "[[step]]\nop = \"teleport\"\n");
  EXPECT_EQ(bad.status().code(), StatusCode::kInvalidArgument);
  auto range = RunScenarioText(std::string(kTiny) + "[[step]]\nop = \"down\"\nreplica = 9\n");
  EXPECT_EQ(range.status().code(), StatusCode::kInvalidArgument);
  EXPECT_EQ(RunScenarioFile("/nonexistent.toml").status().code(), StatusCode::kIoError);
}

TEST(FuzzTest, SameSeedSameSchedule) {
  auto a = RunFuzzCase(123, 3), b = RunFuzzCase(123, 3);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.appends_acked, b.appends_acked);
  EXPECT_TRUE(a.pass) << a.violation;
}

TEST(FuzzTest, ManySeedsHoldTheInvariants) {
  FuzzOptions o;
  o.seed = 500;
  o.seeds = 300;
  std::set<uint32_t> ns;
  std::set<std::string> modes;
  auto sum = RunScenarioFuzz(o, [&](const FuzzCase& c) {
    ns.insert(c.n);
    modes.insert(c.mode);
    EXPECT_EQ(c.w, c.n - 1);
  });
  EXPECT_EQ(sum.cases, 300u);
  EXPECT_EQ(sum.failures, 0u) << "first failing seed " << sum.first_failing_seed.value_or(0);
  EXPECT_GT(sum.interrupted_recoveries, 0u);
  EXPECT_EQ(ns, (std::set<uint32_t>{3, 5}));
  EXPECT_EQ(modes.size(), 2u);
  std::ostringstream os;
  WriteFuzzCsvHeader(os);
  WriteFuzzCsv(os, RunFuzzCase(1, 1));
  auto lines = Lines(os.str());
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(Columns(lines[1]), Columns(lines[0]));
}

}  // namespace
}  // namespace pmlog::harness
