#include "pmlog/replication/sim_cluster.h"

namespace pmlog::replication {

using log::Mode;

SimCluster::SimCluster(const log::LogConfig& config, transport::NetworkConditions net)
    : config_(config), net_(std::make_unique<transport::SimNetwork>(net)) {
  for (uint32_t i = 0; i < config_.replicas; ++i) {
    regions_.push_back(std::make_unique<pmem::PersistenceRegion>(config_.capacity));
    nodes_.push_back(config_.mode == Mode::kLocal ? -1 : net_->AddBackup(regions_.back().get()));
    up_.push_back(true);
  }
}

SimCluster::~SimCluster() = default;

int SimCluster::client_node(int primary) {
  if (config_.mode != Mode::kRemoteOnly) return nodes_[primary];
  while (clients_.size() <= static_cast<size_t>(primary)) clients_.push_back(net_->AddClient());
  return clients_[primary];
}

void SimCluster::CrashReplica(int i, const pmem::FaultPlan& plan) {
  regions_[i]->CrashInPlace(plan);
  if (nodes_[i] >= 0) {
    net_->SetNodeUp(nodes_[i], false);
    if (up_[i]) net_->SetNodeUp(nodes_[i], true);
  }
}

void SimCluster::SetReplicaUp(int i, bool up) {
  up_[i] = up;
  if (nodes_[i] >= 0) net_->SetNodeUp(nodes_[i], up);
}

std::vector<int> SimCluster::PrimaryCandidates() {
  std::vector<int> out;
  if (config_.mode == Mode::kRemoteOnly) {
    // Any client can take over; offer the next unused id.
    out.push_back(static_cast<int>(clients_.size()));
    return out;
  }
  for (uint32_t i = 0; i < replicas(); ++i) {
    if (up_[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> SimCluster::BackupIds() {
  std::vector<int> out;
  for (uint32_t i = 0; i < replicas(); ++i) out.push_back(static_cast<int>(i));
  return out;
}

void SimCluster::FenceBackup(int id) {
  if (nodes_[id] >= 0) net_->FenceBackup(nodes_[id]);
}

std::unique_ptr<ReplicaSet> SimCluster::MakeReplicaSet(int primary) {
  std::vector<std::unique_ptr<transport::Endpoint>> eps;
  pmem::PersistenceRegion* local = nullptr;
  if (config_.mode == Mode::kRemoteOnly) {
    int from = client_node(primary);
    for (uint32_t i = 0; i < replicas(); ++i) {
      eps.push_back(net_->Connect(from, nodes_[i], static_cast<int>(i), config_.net_timeout_ticks));
    }
  } else {
    if (primary < 0 || static_cast<uint32_t>(primary) >= replicas()) return nullptr;
    local = regions_[primary].get();
    for (uint32_t i = 0; i < replicas(); ++i) {
      if (static_cast<int>(i) == primary) continue;
      eps.push_back(net_->Connect(nodes_[primary], nodes_[i], static_cast<int>(i), config_.net_timeout_ticks));
    }
  }
  auto set = ReplicaSet::Make(config_, local, std::move(eps));
  if (!set.ok()) return nullptr;
  return std::move(set.value());
}

Result<FailOverResult> SimCluster::Create(int primary, log::LogHooks hooks) {
  FailOverResult out;
  out.primary = primary;
  out.set = MakeReplicaSet(primary);
  if (!out.set) return Status::InvalidArgument("cannot build replica set");
  auto log = log::Log::Create(*out.set, config_, std::move(hooks));
  if (!log.ok()) return log.status();
  out.log = std::move(log.value());
  return out;
}

Result<FailOverResult> SimCluster::Open(int primary, log::LogHooks hooks) {
  return OpenPrimary(*this, primary, config_, std::move(hooks));
}

}  // namespace pmlog::replication
