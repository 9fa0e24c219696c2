#pragma once

#include <memory>
#include <vector>

#include "pmlog/log/config.h"
#include "pmlog/pmem/region.h"
#include "pmlog/replication/membership.h"
#include "pmlog/transport/sim_network.h"

namespace pmlog::replication {

// N emulated PMEM regions, each served by a backup on its own simulated node.
// Replica i lives on node node(i). In local+remote mode primary p uses
// region(p) directly and reaches the other N-1 over the network; in
// remote-only mode every primary is a fresh client node reaching all N.
// Local mode has a single region and no network traffic.
class SimCluster final : public ClusterControl {
 public:
  SimCluster(const log::LogConfig& config, transport::NetworkConditions net = {});
  ~SimCluster() override;

  const log::LogConfig& config() const { return config_; }
  uint32_t replicas() const { return static_cast<uint32_t>(regions_.size()); }
  transport::SimNetwork& net() { return *net_; }
  pmem::PersistenceRegion& region(int i) { return *regions_[i]; }
  int node(int i) const { return nodes_[i]; }
  // Node the given primary sends from.
  int client_node(int primary);

  // Power failure of replica i: its region keeps only what `plan` lets
  // survive and its backup restarts, severing its connections.
  void CrashReplica(int i, const pmem::FaultPlan& plan);
  void SetReplicaUp(int i, bool up);
  bool replica_up(int i) const { return up_[i]; }

  // Creates the log for `primary` on fresh regions.
  Result<FailOverResult> Create(int primary, log::LogHooks hooks = {});
  Result<FailOverResult> Open(int primary, log::LogHooks hooks = {});

  std::vector<int> PrimaryCandidates() override;
  std::vector<int> BackupIds() override;
  void FenceBackup(int id) override;
  std::unique_ptr<ReplicaSet> MakeReplicaSet(int primary) override;

 private:
  log::LogConfig config_;
  std::unique_ptr<transport::SimNetwork> net_;
  std::vector<std::unique_ptr<pmem::PersistenceRegion>> regions_;
  std::vector<int> nodes_;
  std::vector<bool> up_;
  std::vector<int> clients_;  // remote-only: client node per primary id
};

}  // namespace pmlog::replication
