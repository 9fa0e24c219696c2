#pragma once

#include <cstdint>
#include <string>

#include "pmlog/status.h"

namespace pmlog::log {

enum class Mode { kLocal, kLocalRemote, kRemoteOnly };
enum class FlushOrder { kRemoteFirst, kLocalFirst, kParallel };

struct ForcePolicy {
  enum class Kind { kSync, kFrequency, kGroupCommit };
  Kind kind = Kind::kSync;
  uint64_t frequency = 1;   // kFrequency: F
  uint64_t max_threads = 1;  // kFrequency: T, the writer count the F*T bound is stated for
  uint64_t group_size = 1;  // kGroupCommit: G

  static ForcePolicy Sync() { return {}; }
  static ForcePolicy Frequency(uint64_t f, uint64_t t_max = 1) { return {Kind::kFrequency, f, t_max, 1}; }
  static ForcePolicy GroupCommit(uint64_t g) { return {Kind::kGroupCommit, 1, 1, g}; }

  // Records a crash may lose without violating the policy.
  uint64_t VulnerabilityBound() const;
  std::string ToString() const;
};

struct LogConfig {
  uint64_t capacity = 1 << 20;
  Mode mode = Mode::kLocal;
  uint32_t replicas = 1;      // N, counting the local copy if there is one
  uint32_t write_quorum = 1;  // W
  ForcePolicy policy;
  FlushOrder flush_order = FlushOrder::kRemoteFirst;
  uint64_t force_wait_timeout_ms = 5000;
  uint64_t force_wait_ticks = 5000;  // same bound when driven by a cooperative scheduler
  uint64_t net_timeout_ticks = 1000;
  uint64_t net_timeout_ms = 1000;
  // Mutation knob for harness self-tests: complete() leaves payload_crc zero.
  bool debug_skip_payload_crc = false;

  Status Validate() const;
};

std::string ModeName(Mode m);
Result<Mode> ParseMode(const std::string& s);
std::string FlushOrderName(FlushOrder f);
Result<FlushOrder> ParseFlushOrder(const std::string& s);
Result<ForcePolicy> ParsePolicy(const std::string& kind, uint64_t freq, uint64_t threads, uint64_t group);

// [log] capacity/mode/replicas/write_quorum/flush_order/force_wait_timeout_ms/
// force_wait_ticks/net_timeout_ticks/net_timeout_ms, [policy] kind/frequency/
// max_threads/group_size. Missing keys keep their defaults.
Result<LogConfig> ParseLogConfig(const std::string& toml_text);
Result<LogConfig> LoadLogConfig(const std::string& path);

}  // namespace pmlog::log
