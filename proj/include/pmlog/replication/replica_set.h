#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "pmlog/log/config.h"
#include "pmlog/log/storage.h"
#include "pmlog/pmem/region.h"
#include "pmlog/transport/endpoint.h"

namespace pmlog::replication {

struct QuorumConfig {
  uint32_t n = 1;
  uint32_t w = 1;

  uint32_t r() const { return n - w + 1; }
  Status Validate() const;
};

// Smallest R with R + W > N.
Result<uint32_t> DeriveReadQuorum(uint32_t n, uint32_t w);

struct RecoveryReport {
  uint32_t readable = 0;  // copies whose image could be fetched
  uint32_t valid = 0;     // ... and carry a superline
  uint64_t max_epoch = 0;
  uint64_t new_epoch = 0;
  int chosen = -2;        // -1 local copy, >= 0 backup index
  std::vector<int> repaired;  // copies whose record area had to be rewritten
  uint32_t epoch_writes = 0;
  log::EndReason chosen_end = log::EndReason::kEndOfLog;
  uint64_t chosen_next_lsn = 0;
};

// The copies of one log: an optional local PMEM region plus remote backups
// reached through transport endpoints. Implements the replicated force
// (PersistRanges) and multi-copy recovery.
class ReplicaSet final : public log::LogStorage {
 public:
  // `local` is required for kLocal / kLocalRemote and ignored for
  // kRemoteOnly, where a volatile staging region is used instead.
  ReplicaSet(log::Mode mode, uint32_t write_quorum, log::FlushOrder order, uint64_t capacity,
             pmem::PersistenceRegion* local, std::vector<std::unique_ptr<transport::Endpoint>> backups);
  ~ReplicaSet() override;

  static Result<std::unique_ptr<ReplicaSet>> Make(const log::LogConfig& config, pmem::PersistenceRegion* local,
                                                  std::vector<std::unique_ptr<transport::Endpoint>> backups);

  pmem::PersistenceRegion& working() override { return *working_; }
  Status Connect() override;
  Status PersistRanges(std::span<const ByteRange> ranges) override;
  Result<log::ScanResult> Recover() override;

  const QuorumConfig& quorum() const { return quorum_; }
  log::Mode mode() const { return mode_; }
  bool has_local() const { return mode_ != log::Mode::kRemoteOnly; }
  size_t backup_count() const { return backups_.size(); }
  transport::Endpoint& backup(size_t i) { return *backups_[i]; }
  const RecoveryReport& last_report() const { return report_; }

  // Recovery crash injection: the k-th copy write issued by Recover() (and
  // every later one) fails as if the recovering node lost power.
  void FailRecoveryAfterWrites(std::optional<uint64_t> k) { recovery_write_budget_ = k; }

  // Counts PersistRanges calls that reached quorum / failed.
  uint64_t forces_ok() const { return forces_ok_.load(); }
  uint64_t forces_failed() const { return forces_failed_.load(); }

 private:
  // One durable write of `data` at `offset` to copy `which` (-1 local).
  Status WriteCopy(int which, uint64_t offset, ByteView data);

  log::Mode mode_;
  QuorumConfig quorum_;
  log::FlushOrder order_;
  uint64_t capacity_;
  pmem::PersistenceRegion* local_;
  std::unique_ptr<pmem::PersistenceRegion> staging_;
  pmem::PersistenceRegion* working_;
  std::vector<std::unique_ptr<transport::Endpoint>> backups_;
  RecoveryReport report_;
  std::optional<uint64_t> recovery_write_budget_;
  std::atomic<uint64_t> forces_ok_{0}, forces_failed_{0};
};

}  // namespace pmlog::replication
