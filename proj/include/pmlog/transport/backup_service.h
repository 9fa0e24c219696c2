#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <shared_mutex>

#include "pmlog/pmem/region.h"
#include "pmlog/transport/wire.h"

namespace pmlog::transport {

// Backup-side protocol state machine, shared by the simulated and socket
// transports. Only the most recently opened connection generation may
// touch the region; Fence() deposes it without opening a new one.
class BackupService {
 public:
  explicit BackupService(pmem::PersistenceRegion* region) : region_(region) {}

  // Opens a new generation, deposing the previous one.
  uint64_t Hello();
  void Fence();

  // Applies one request received on connection generation `gen` and returns
  // the response frame.
  Frame Handle(uint64_t gen, const Frame& request);

  // Handle() plus the connection-control frames: Hello rebinds *conn_gen to
  // a fresh generation, Fence deposes everyone.
  Frame Dispatch(uint64_t* conn_gen, const Frame& request);

  uint64_t generation() const;
  uint64_t accepted_epoch() const;

  // The region may be swapped while the service is quiescent (node restart).
  void set_region(pmem::PersistenceRegion* region);
  pmem::PersistenceRegion* region() const { return region_; }

  uint64_t writes_applied() const;

 private:
  mutable std::shared_mutex mu_;
  pmem::PersistenceRegion* region_;
  uint64_t generation_ = 0;
  uint64_t opened_ = 0;  // generation handed to the current connection, 0 if fenced
  uint64_t epoch_ = 0;
  std::atomic<uint64_t> writes_{0};
  std::mutex epoch_mu_;
};

}  // namespace pmlog::transport
