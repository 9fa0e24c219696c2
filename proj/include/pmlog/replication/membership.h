#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "pmlog/log/config.h"
#include "pmlog/log/log.h"
#include "pmlog/replication/replica_set.h"

namespace pmlog::replication {

// What fail-over needs from the deployment: who can become primary, how to
// fence a backup out of band, and how a given primary sees the copies.
class ClusterControl {
 public:
  virtual ~ClusterControl() = default;
  virtual std::vector<int> PrimaryCandidates() = 0;
  virtual std::vector<int> BackupIds() = 0;
  virtual void FenceBackup(int id) = 0;
  virtual std::unique_ptr<ReplicaSet> MakeReplicaSet(int primary) = 0;
};

// Stand-in for the external coordination service: a primary id and a
// generation, advanced by scripted elections.
class MembershipStub {
 public:
  explicit MembershipStub(int primary = 0) : primary_(primary) {}

  int primary() const { return primary_; }
  uint64_t generation() const { return generation_; }

  // Lowest candidate id other than the current primary.
  Result<int> ElectNewPrimary(const std::vector<int>& candidates);
  void NotifyBackups(ClusterControl& cluster);

 private:
  int primary_;
  uint64_t generation_ = 1;
};

struct FailOverResult {
  int primary = -1;
  std::unique_ptr<ReplicaSet> set;
  std::unique_ptr<log::Log> log;  // declared after `set`, destroyed first
};

// Elects a new primary, fences every backup so the old primary's
// connections are dead, then opens (recovers) the log on the new primary.
Result<FailOverResult> FailOver(MembershipStub& stub, ClusterControl& cluster, const log::LogConfig& config,
                                log::LogHooks hooks = {});

// Opens the log for `primary` without an election (first start, restarts).
Result<FailOverResult> OpenPrimary(ClusterControl& cluster, int primary, const log::LogConfig& config,
                                   log::LogHooks hooks = {});

}  // namespace pmlog::replication
