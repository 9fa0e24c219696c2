#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pmlog/status.h"

namespace pmlog::harness {

struct ScenarioResult {
  std::string name;
  bool pass = true;
  std::vector<std::string> trace;  // one line per step
  std::string failure;
};

// Replays a scripted cluster scenario:
//
//   [scenario]  name, seed, latency_min, latency_max
//   [log]       cluster topology and quorum (same keys as a log config)
//   [policy]    force policy
//   [[step]]    op = "create" | "open" | "failover" | "append" | "append_old" | "flush" |
//                    "cleanup" | "partition" | "heal" | "heal_all" | "down" | "up" |
//                    "crash" | "kill_primary" | "media_error" | "expect_records" |
//                    "expect_epoch" | "expect_identical"
//               plus the op's arguments and an optional expect = "<status>".
//
// A malformed file is an error Status; a failed expectation is pass = false.
Result<ScenarioResult> RunScenarioText(const std::string& toml_text, std::optional<uint64_t> seed_override = {});
Result<ScenarioResult> RunScenarioFile(const std::string& path, std::optional<uint64_t> seed_override = {});

struct FuzzOptions {
  uint64_t seed = 1;
  uint64_t seeds = 10000;
  uint32_t rounds = 3;
};

struct FuzzCase {
  uint64_t seed = 0;
  uint32_t n = 0, w = 0;
  std::string mode;
  uint32_t rounds = 0;
  uint64_t appends_acked = 0;
  uint64_t interrupted_recoveries = 0;
  bool pass = true;
  std::string violation;
  std::vector<std::string> trace;  // fault schedule and outcomes, for reproduction
};

struct FuzzSummary {
  uint64_t cases = 0;
  uint64_t failures = 0;
  uint64_t interrupted_recoveries = 0;
  std::optional<uint64_t> first_failing_seed;
};

// Random fault schedules over N in {3, 5}, W = N-1, at most N-W impaired
// copies per recovery. Checks no forced-record loss, no diverging commit,
// epoch monotonicity, and that a recovery interrupted part way and rerun
// converges all reachable copies to identical images.
FuzzCase RunFuzzCase(uint64_t seed, uint32_t rounds);
FuzzSummary RunScenarioFuzz(const FuzzOptions& opts, const std::function<void(const FuzzCase&)>& sink);

void WriteFuzzCsvHeader(std::ostream& os);
void WriteFuzzCsv(std::ostream& os, const FuzzCase& c);

}  // namespace pmlog::harness
