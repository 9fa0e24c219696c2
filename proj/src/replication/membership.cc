#include "pmlog/replication/membership.h"

namespace pmlog::replication {

Result<int> MembershipStub::ElectNewPrimary(const std::vector<int>& candidates) {
  int pick = -1;
  for (int c : candidates) {
    if (c != primary_ && (pick < 0 || c < pick)) pick = c;
  }
  if (pick < 0) return Status::RecoveryFailure("no candidate for primary");
  primary_ = pick;
  ++generation_;
  return pick;
}

void MembershipStub::NotifyBackups(ClusterControl& cluster) {
  for (int id : cluster.BackupIds()) cluster.FenceBackup(id);
}

Result<FailOverResult> OpenPrimary(ClusterControl& cluster, int primary, const log::LogConfig& config,
                                   log::LogHooks hooks) {
  FailOverResult out;
  out.primary = primary;
  out.set = cluster.MakeReplicaSet(primary);
  if (!out.set) return Status::InvalidArgument("cluster cannot host primary " + std::to_string(primary));
  auto log = log::Log::Open(*out.set, config, std::move(hooks));
  if (!log.ok()) return log.status();
  out.log = std::move(log.value());
  return out;
}

Result<FailOverResult> FailOver(MembershipStub& stub, ClusterControl& cluster, const log::LogConfig& config,
                                log::LogHooks hooks) {
  auto next = stub.ElectNewPrimary(cluster.PrimaryCandidates());
  if (!next.ok()) return next.status();
  stub.NotifyBackups(cluster);
  return OpenPrimary(cluster, *next, config, std::move(hooks));
}

}  // namespace pmlog::replication
