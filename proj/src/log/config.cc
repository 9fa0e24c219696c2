#include "pmlog/log/config.h"

#include <fstream>
#include <sstream>

#include "toml.hpp"

namespace pmlog::log {

uint64_t ForcePolicy::VulnerabilityBound() const {
  switch (kind) {
    case Kind::kSync:
      return 0;
    case Kind::kFrequency:
      return frequency * max_threads;
    case Kind::kGroupCommit:
      return group_size;
  }
  return 0;
}

std::string ForcePolicy::ToString() const {
  switch (kind) {
    case Kind::kSync:
      return "sync";
    case Kind::kFrequency:
      return "frequency(" + std::to_string(frequency) + ")";
    case Kind::kGroupCommit:
      return "group(" + std::to_string(group_size) + ")";
  }
  return "?";
}

Status LogConfig::Validate() const {
  if (capacity % 64 != 0 || capacity < 384) return Status::InvalidArgument("capacity must be a multiple of 64, >= 384");
  if (replicas == 0 || write_quorum == 0 || write_quorum > replicas) {
    return Status::InvalidArgument("need 1 <= write_quorum <= replicas");
  }
  if (mode == Mode::kLocal && replicas != 1) return Status::InvalidArgument("local mode has exactly one replica");
  if (mode == Mode::kLocalRemote && replicas < 2) return Status::InvalidArgument("local+remote needs a backup");
  if (policy.kind == ForcePolicy::Kind::kFrequency && policy.frequency == 0) {
    return Status::InvalidArgument("frequency must be >= 1");
  }
  if (policy.kind == ForcePolicy::Kind::kGroupCommit && policy.group_size == 0) {
    return Status::InvalidArgument("group_size must be >= 1");
  }
  return Status::OK();
}

std::string ModeName(Mode m) {
  switch (m) {
    case Mode::kLocal:
      return "local";
    case Mode::kLocalRemote:
      return "local+remote";
    case Mode::kRemoteOnly:
      return "remote_only";
  }
  return "?";
}

Result<Mode> ParseMode(const std::string& s) {
  if (s == "local") return Mode::kLocal;
  if (s == "local+remote" || s == "local_remote") return Mode::kLocalRemote;
  if (s == "remote_only" || s == "remote" || s == "remote-only") return Mode::kRemoteOnly;
  return Status::InvalidArgument("unknown mode '" + s + "'");
}

std::string FlushOrderName(FlushOrder f) {
  switch (f) {
    case FlushOrder::kRemoteFirst:
      return "remote-first";
    case FlushOrder::kLocalFirst:
      return "local-first";
    case FlushOrder::kParallel:
      return "parallel";
  }
  return "?";
}

Result<FlushOrder> ParseFlushOrder(const std::string& s) {
  if (s == "remote-first" || s == "remote_first") return FlushOrder::kRemoteFirst;
  if (s == "local-first" || s == "local_first") return FlushOrder::kLocalFirst;
  if (s == "parallel") return FlushOrder::kParallel;
  return Status::InvalidArgument("unknown flush order '" + s + "'");
}

Result<ForcePolicy> ParsePolicy(const std::string& kind, uint64_t freq, uint64_t threads, uint64_t group) {
  if (kind == "sync") return ForcePolicy::Sync();
  if (kind == "frequency" || kind == "freq") return ForcePolicy::Frequency(freq, threads);
  if (kind == "group" || kind == "group_commit" || kind == "groupcommit") return ForcePolicy::GroupCommit(group);
  return Status::InvalidArgument("unknown policy '" + kind + "'");
}

namespace {

template <typename T>
void Get(const toml::table& t, std::string_view key, T& out) {
  if (auto v = t[key].value<T>()) out = *v;
}

void GetU64(const toml::table& t, std::string_view key, uint64_t& out) {
  if (auto v = t[key].value<int64_t>(); v && *v >= 0) out = static_cast<uint64_t>(*v);
}

}  // namespace

Result<LogConfig> ParseLogConfig(const std::string& text) {
  LogConfig c;
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    return Status::InvalidArgument(std::string("config parse error: ") + std::string(e.description()));
  }
  if (auto* t = root["log"].as_table()) {
    GetU64(*t, "capacity", c.capacity);
    std::string mode = ModeName(c.mode);
    Get(*t, "mode", mode);
    auto m = ParseMode(mode);
    if (!m.ok()) return m.status();
    c.mode = *m;
    uint64_t n = c.replicas, w = c.write_quorum;
    GetU64(*t, "replicas", n);
    GetU64(*t, "write_quorum", w);
    c.replicas = static_cast<uint32_t>(n);
    c.write_quorum = static_cast<uint32_t>(w);
    std::string order = FlushOrderName(c.flush_order);
    Get(*t, "flush_order", order);
    auto f = ParseFlushOrder(order);
    if (!f.ok()) return f.status();
    c.flush_order = *f;
    GetU64(*t, "force_wait_timeout_ms", c.force_wait_timeout_ms);
    GetU64(*t, "force_wait_ticks", c.force_wait_ticks);
    GetU64(*t, "net_timeout_ticks", c.net_timeout_ticks);
    GetU64(*t, "net_timeout_ms", c.net_timeout_ms);
  }
  if (auto* t = root["policy"].as_table()) {
    std::string kind = "sync";
    uint64_t freq = 1, threads = 1, group = 1;
    Get(*t, "kind", kind);
    GetU64(*t, "frequency", freq);
    GetU64(*t, "max_threads", threads);
    GetU64(*t, "group_size", group);
    auto p = ParsePolicy(kind, freq, threads, group);
    if (!p.ok()) return p.status();
    c.policy = *p;
  }
  PMLOG_RETURN_IF_ERROR(c.Validate());
  return c;
}

Result<LogConfig> LoadLogConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) return Status::IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseLogConfig(ss.str());
}

}  // namespace pmlog::log
