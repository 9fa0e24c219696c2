#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "pmlog/log/config.h"

namespace pmlog::harness {

struct CrashTestOptions {
  uint64_t seed = 1;
  uint64_t trials = 1000;
  uint64_t capacity = 32 * 1024;
  uint32_t max_writers = 16;
  uint64_t min_record = 64;
  uint64_t max_record = 4096;
  uint32_t ops_per_writer = 12;
  // Unset: each trial draws sync or frequency(2..16). Set: frequency(F).
  std::optional<uint64_t> frequency;
  // Harness self-test: the log leaves payload checksums zero.
  bool skip_payload_crc = false;
};

struct TrialReport {
  uint64_t trial = 0;
  uint64_t seed = 0;  // rerun with --seed <seed> --trials 1
  uint32_t writers = 0;
  std::string policy;
  uint64_t events = 0;
  uint64_t crash_point = 0;
  uint64_t forced_lsn = 0;          // highest LSN whose force had returned at the crash
  uint64_t recovered_tail_lsn = 0;  // last LSN recovery found
  uint64_t yielded = 0;
  bool pass = true;
  std::string violation;
};

// One seeded trial: a fiber-scheduled multi-writer workload, a crash at an
// event drawn uniformly from the run's store/persist stream, recovery, and
// the commit-prefix checks.
TrialReport RunCrashTrial(const CrashTestOptions& opts, uint64_t trial, uint64_t seed);

struct CrashTestSummary {
  uint64_t trials = 0;
  uint64_t failures = 0;
  std::optional<uint64_t> first_failing_seed;
};

// Trial i runs with seed opts.seed + i.
CrashTestSummary RunCrashTest(const CrashTestOptions& opts, const std::function<void(const TrialReport&)>& sink);

void WriteTrialCsvHeader(std::ostream& os);
void WriteTrialCsv(std::ostream& os, const TrialReport& r);

uint64_t MixSeed(uint64_t x);
// Commas and newlines replaced so the text fits one CSV field.
std::string CsvField(std::string s);

}  // namespace pmlog::harness
