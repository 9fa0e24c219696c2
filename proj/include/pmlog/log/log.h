#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pmlog/log/config.h"
#include "pmlog/log/layout.h"
#include "pmlog/log/storage.h"
#include "pmlog/primitives/atomic_cell.h"
#include "pmlog/status.h"

namespace pmlog::log {

enum class RecordState : uint8_t { kFree, kReserved, kCompleting, kCompleted, kForced, kCleaned };

std::string_view RecordStateName(RecordState s);

struct ReservationId {
  uint64_t lsn = 0;  // 0 = null
  uint64_t offset = 0;  // header position in the working region
  uint32_t length = 0;

  bool valid() const { return lsn != 0; }
  bool operator==(const ReservationId&) const = default;
};

enum class ForceResult { kForced, kDeferred };

// Cooperative-scheduling hooks. `yield` is called inside every wait and
// spin; `preempt` marks points where a scheduler may switch writers. With a
// yield hook installed, wait timeouts count yields instead of wall time.
struct LogHooks {
  std::function<void()> yield;
  std::function<void()> preempt;
};

struct LogRecord {
  uint64_t lsn = 0;
  Bytes payload;
  ReservationId id;
  uint32_t epoch = 0;
};

// Walks the records of the log image from head: LSNs must increase by one,
// each record must be valid and its payload checksum must match. Reclaimed
// records are stepped over without being yielded.
class RecoveryIterator {
 public:
  RecoveryIterator(ScanResult scan, ByteView image);

  bool Next(LogRecord* out);
  EndReason end_reason() const { return scan_.end; }
  bool repairable_corruption() const { return scan_.end == EndReason::kCrcMismatch; }
  const ScanResult& scan() const { return scan_; }

 private:
  ScanResult scan_;
  Bytes image_;
  size_t next_ = 0;
};

class Log {
 public:
  // Formats every copy managed by `storage` (epoch 1, start LSN 1).
  static Result<std::unique_ptr<Log>> Create(LogStorage& storage, const LogConfig& config, LogHooks hooks = {});
  // Runs recovery through `storage`, then rebuilds the in-memory state.
  static Result<std::unique_ptr<Log>> Open(LogStorage& storage, const LogConfig& config, LogHooks hooks = {});

  ~Log();
  Log(const Log&) = delete;
  Log& operator=(const Log&) = delete;

  Result<ReservationId> Reserve(uint64_t size);
  Status Copy(const ReservationId& id, ByteView data, uint64_t at = 0);
  Status Complete(const ReservationId& id);
  Result<ForceResult> Force(const ReservationId& id, uint64_t freq = 1);

  // Reserve + Copy + Complete + the configured policy's force.
  Result<ReservationId> Append(ByteView data, ForceResult* force_out = nullptr);

  static uint64_t GetLsn(const ReservationId& id) { return id.lsn; }

  Status Cleanup(const ReservationId& id);
  Status CleanupAll();

  // Single reader; not concurrent with writers.
  RecoveryIterator NewIterator() const;

  RecordState state(const ReservationId& id) const;
  uint64_t last_forced_lsn() const { return last_forced_.load(std::memory_order_acquire); }
  uint64_t max_completed_lsn() const { return max_completed_.load(std::memory_order_acquire); }
  uint64_t next_lsn() const;
  uint64_t epoch() const { return epoch_; }
  Superline superline() const;
  const Geometry& geometry() const { return geo_; }
  const LogConfig& config() const { return config_; }
  uint64_t max_record_size() const { return geo_.max_record(); }
  // Forces everything completed so far, whatever the policy.
  Status Flush();

 private:
  struct Entry {
    std::atomic<uint64_t> lsn{0};
    std::atomic<uint8_t> state{0};
    uint64_t offset = 0;
    uint32_t length = 0;
  };

  class SpinLock;

  Log(LogStorage& storage, const LogConfig& config, LogHooks hooks);

  Status InitFromScan(const ScanResult& scan);
  Entry& entry(uint64_t lsn) const { return entries_[lsn % entry_count_]; }
  Status CheckId(const ReservationId& id) const;
  void Yield() const;
  void Preempt() const;
  Result<ForceResult> ForceTo(uint64_t target);
  uint64_t CompletedFrontierLocked() const;
  bool GroupMaybeForce(Status* error);
  Status WriteSuperline(const Superline& next);

  LogStorage& storage_;
  pmem::PersistenceRegion& region_;
  LogConfig config_;
  Geometry geo_;
  LogHooks hooks_;
  primitives::AtomicCell cell_;

  std::unique_ptr<SpinLock> reserve_mu_, force_mu_, cleanup_mu_;

  // reserve_mu_
  uint64_t next_lsn_ = 1;
  uint64_t tail_pos_ = kRecordAreaStart;
  uint64_t head_pos_ = kRecordAreaStart;
  uint64_t head_lsn_ = 1;
  Superline sl_;

  // force_mu_
  uint64_t forced_end_pos_ = kRecordAreaStart;

  std::atomic<uint64_t> last_forced_{0};
  std::atomic<uint64_t> max_completed_{0};
  std::atomic<int64_t> group_window_{0};
  std::atomic<bool> group_forcing_{false};
  uint64_t epoch_ = 1;

  std::unique_ptr<Entry[]> entries_;
  uint64_t entry_count_ = 0;
};

}  // namespace pmlog::log
