#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>

#include "pmlog/log/config.h"

namespace pmlog::harness {

struct WindowOptions {
  uint64_t frequency = 8;
  uint32_t threads = 16;
  uint64_t ops_per_writer = 500;
  uint64_t record_size = 256;
  uint64_t seed = 1;
  uint64_t capacity = 1 << 20;
  uint32_t crashes = 0;  // power failures injected at random scheduling points
};

struct WindowResult {
  std::map<uint64_t, uint64_t> histogram;  // window size -> samples
  uint64_t samples = 0;
  uint64_t max = 0;
  double mean = 0;
  uint64_t p50 = 0, p99 = 0;
  uint64_t bound = 0;  // F x T
  uint64_t errors = 0;
  double below_half = 0;  // share of samples < 0.5 F T
  // completed records missing after recovery from each injected crash
  uint64_t crashes = 0;
  uint64_t max_lost = 0;
  uint64_t lost_over_bound = 0;
};

// T fiber writers appending with Frequency(F); the window (latest completed
// LSN minus last forced LSN) is sampled at every scheduler switch.
WindowResult RunWindowDistribution(const WindowOptions& opts);
void WriteWindowCsv(std::ostream& os, const WindowResult& r);

struct BenchOptions {
  log::ForcePolicy policy = log::ForcePolicy::Frequency(8, 16);
  uint32_t threads = 16;
  uint64_t record_size = 256;
  uint64_t duration_ms = 1000;
  uint64_t capacity = 64ull << 20;
  uint64_t seed = 1;
  uint64_t persist_line_ns = 100;  // emulated flush cost per line
  uint64_t persist_fence_ns = 100;  // and per Persist call
};

struct BenchResult {
  std::string policy;
  uint32_t threads = 0;
  uint64_t record_size = 0;
  uint64_t ops = 0;
  double seconds = 0;
  double ops_per_sec = 0;
  double mean_us = 0, p50_us = 0, p99_us = 0, p999_us = 0;
  uint64_t persists = 0;
  uint64_t violations = 0;
};

// Real threads appending for a fixed wall-clock duration, then a crash and
// recovery of the flushed log as a sanity check.
BenchResult RunBench(const BenchOptions& opts);
void WriteBenchCsvHeader(std::ostream& os);
void WriteBenchCsv(std::ostream& os, const BenchResult& r);

}  // namespace pmlog::harness
