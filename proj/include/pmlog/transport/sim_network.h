#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "pmlog/pmem/region.h"
#include "pmlog/transport/backup_service.h"
#include "pmlog/transport/endpoint.h"

namespace pmlog::transport {

struct NetworkConditions {
  uint64_t latency_min = 1;  // ticks, per message direction
  uint64_t latency_max = 4;
  double drop_probability = 0.0;
  uint64_t seed = 1;
  std::vector<std::pair<int, int>> partitions;
};

inline constexpr uint64_t kDefaultSimTimeoutTicks = 1000;

// Deterministic message-passing network over a virtual clock. Messages are
// queued with a seeded latency and delivered in (time, sequence) order by
// whichever caller is waiting for a reply, so a run is fully determined by
// the seed and the order of calls into the network.
class SimNetwork {
 public:
  explicit SimNetwork(NetworkConditions conditions = {});
  ~SimNetwork();

  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  // Node ids are shared by clients (primaries) and backups.
  int AddClient();
  int AddBackup(pmem::PersistenceRegion* region);

  // Not yet connected: call Reconnect() first.
  std::unique_ptr<Endpoint> Connect(int from, int to, int replica_id, uint64_t timeout_ticks = kDefaultSimTimeoutTicks);

  void SetConditions(NetworkConditions conditions);
  void Partition(int a, int b);
  void Heal(int a, int b);
  void HealAll();
  bool Partitioned(int a, int b) const;

  // A down node drops everything addressed to it and its open connections
  // are severed.
  void SetNodeUp(int node, bool up);
  bool node_up(int node) const;

  // Out-of-band membership action on a backup.
  void FenceBackup(int node);

  BackupService& backup(int node);
  pmem::PersistenceRegion* backup_region(int node);
  void ReplaceBackupRegion(int node, pmem::PersistenceRegion* region);

  uint64_t now() const;
  // Runs queued deliveries up to virtual time `t` (or until idle).
  void RunUntil(uint64_t t);
  void RunUntilIdle();
  uint64_t delivered() const;
  uint64_t dropped() const;

  // Invoked (with the network lock held) after each request a backup applies.
  void SetDeliveryHook(std::function<void(int node, const Frame& request)> hook);

 private:
  friend class SimEndpoint;

  struct Reply {
    Status status;
    Bytes data;
    uint64_t value = 0;
  };
  struct Conn {
    int from = 0, to = 0;
    uint64_t gen = 0;
    bool open = false;
    bool fenced = false;
    bool severed = false;  // backup restarted underneath the connection
    uint64_t last_up = 0, last_down = 0;  // FIFO delivery horizon per direction
    std::map<Ticket, Reply> replies;
    std::map<Ticket, uint64_t> deadlines;
  };
  struct Msg {
    uint64_t at = 0, seq = 0;
    int conn = 0;
    bool to_backup = true;
    Ticket ticket = 0;
    Bytes bytes;
  };
  struct MsgOrder {
    bool operator()(const Msg& a, const Msg& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };
  struct Node {
    bool up = true;
    std::unique_ptr<BackupService> service;  // null for clients
  };

  // All private helpers expect mu_ held.
  uint64_t LatencyLocked();
  Ticket SendLocked(int conn, const Frame& f, uint64_t timeout);
  bool StepLocked();
  void DeliverLocked(Msg m);
  bool LinkDownLocked(int a, int b) const;
  Status AwaitLocked(std::unique_lock<std::mutex>& lock, int conn, Ticket t, Reply* out);
  int OpenConnLocked(int from, int to);
  void CloseConnLocked(int conn);

  mutable std::mutex mu_;
  NetworkConditions cond_;
  std::mt19937_64 rng_;
  uint64_t now_ = 0;
  uint64_t seq_ = 0;
  uint64_t delivered_ = 0, dropped_ = 0;
  Ticket next_ticket_ = 0;
  std::vector<Node> nodes_;
  std::vector<Conn> conns_;
  std::set<std::pair<int, int>> partitions_;
  std::priority_queue<Msg, std::vector<Msg>, MsgOrder> queue_;
  std::function<void(int, const Frame&)> hook_;
};

}  // namespace pmlog::transport
