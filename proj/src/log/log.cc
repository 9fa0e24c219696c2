#include "pmlog/log/log.h"

#include <chrono>
#include <thread>

#include "pmlog/kernels/crc32.h"

namespace pmlog::log {

namespace {

primitives::AtomicCell MakeSuperlineCell(pmem::PersistenceRegion& region) {
  return primitives::AtomicCell(region, 0, kSuperlinePayload, primitives::AtomicCell::IndexMode::kVolatile,
                                ChooseSuperline);
}

}  // namespace

std::string_view RecordStateName(RecordState s) {
  switch (s) {
    case RecordState::kFree:
      return "free";
    case RecordState::kReserved:
      return "reserved";
    case RecordState::kCompleting:
      return "completing";
    case RecordState::kCompleted:
      return "completed";
    case RecordState::kForced:
      return "forced";
    case RecordState::kCleaned:
      return "cleaned";
  }
  return "?";
}

// Test-and-set lock whose spin goes through the log's yield hook, so a
// cooperative scheduler can run the holder.
class Log::SpinLock {
 public:
  explicit SpinLock(const Log* log) : log_(log) {}
  void lock() {
    while (flag_.exchange(true, std::memory_order_acquire)) log_->Yield();
  }
  void unlock() { flag_.store(false, std::memory_order_release); }

 private:
  const Log* log_;
  std::atomic<bool> flag_{false};
};

namespace {

// Bounded wait: wall clock normally, yield count under a scheduler.
class WaitBudget {
 public:
  WaitBudget(bool ticks, uint64_t max_ticks, uint64_t max_ms)
      : ticks_(ticks), max_ticks_(max_ticks),
        deadline_(std::chrono::steady_clock::now() + std::chrono::milliseconds(max_ms)) {}
  bool Exhausted() {
    if (ticks_) return ++spent_ > max_ticks_;
    return std::chrono::steady_clock::now() >= deadline_;
  }

 private:
  bool ticks_;
  uint64_t max_ticks_;
  uint64_t spent_ = 0;
  std::chrono::steady_clock::time_point deadline_;
};

}  // namespace

// ---- iterator ----

RecoveryIterator::RecoveryIterator(ScanResult scan, ByteView image)
    : scan_(std::move(scan)), image_(image.begin(), image.end()) {}

bool RecoveryIterator::Next(LogRecord* out) {
  while (next_ < scan_.records.size()) {
    const auto& r = scan_.records[next_++];
    if (r.reclaimed()) continue;
    out->lsn = r.lsn;
    out->epoch = r.epoch;
    out->id = ReservationId{r.lsn, r.offset, r.length};
    auto begin = image_.begin() + static_cast<ptrdiff_t>(r.offset + kRecordHeaderSize);
    out->payload.assign(begin, begin + r.length);
    return true;
  }
  return false;
}

// ---- construction ----

Log::Log(LogStorage& storage, const LogConfig& config, LogHooks hooks)
    : storage_(storage),
      region_(storage.working()),
      config_(config),
      geo_(config.capacity),
      hooks_(std::move(hooks)),
      cell_(MakeSuperlineCell(storage.working())),
      reserve_mu_(std::make_unique<SpinLock>(this)),
      force_mu_(std::make_unique<SpinLock>(this)),
      cleanup_mu_(std::make_unique<SpinLock>(this)) {
  entry_count_ = geo_.max_records();
  entries_ = std::make_unique<Entry[]>(entry_count_);
}

Log::~Log() = default;

Result<std::unique_ptr<Log>> Log::Create(LogStorage& storage, const LogConfig& config, LogHooks hooks) {
  PMLOG_RETURN_IF_ERROR(config.Validate());
  if (storage.working().capacity() != config.capacity) {
    return Status::InvalidArgument("region capacity does not match config");
  }
  PMLOG_RETURN_IF_ERROR(storage.Connect());
  std::unique_ptr<Log> log(new Log(storage, config, std::move(hooks)));
  auto& region = storage.working();
  Bytes zero(log->geo_.area_size(), 0);
  PMLOG_RETURN_IF_ERROR(region.Store(kRecordAreaStart, zero));
  PMLOG_RETURN_IF_ERROR(storage.PersistRange(kRecordAreaStart, zero.size()));
  Superline sl;
  PMLOG_RETURN_IF_ERROR(log->cell_.Format(sl.Encode(), storage));
  ScanResult empty;
  empty.superline = sl;
  PMLOG_RETURN_IF_ERROR(log->InitFromScan(empty));
  return log;
}

Result<std::unique_ptr<Log>> Log::Open(LogStorage& storage, const LogConfig& config, LogHooks hooks) {
  PMLOG_RETURN_IF_ERROR(config.Validate());
  if (storage.working().capacity() != config.capacity) {
    return Status::InvalidArgument("region capacity does not match config");
  }
  auto scan = storage.Recover();
  if (!scan.ok()) return scan.status();
  std::unique_ptr<Log> log(new Log(storage, config, std::move(hooks)));
  PMLOG_RETURN_IF_ERROR(log->cell_.Open());
  PMLOG_RETURN_IF_ERROR(log->InitFromScan(*scan));
  return log;
}

Status Log::InitFromScan(const ScanResult& scan) {
  sl_ = scan.superline;
  epoch_ = sl_.epoch;
  head_pos_ = geo_.Normalize(sl_.head_offset);
  head_lsn_ = sl_.start_lsn;
  next_lsn_ = scan.next_lsn;
  tail_pos_ = scan.tail_offset;
  forced_end_pos_ = tail_pos_;
  last_forced_.store(next_lsn_ - 1);
  max_completed_.store(next_lsn_ - 1);
  for (const auto& r : scan.records) {
    auto& e = entry(r.lsn);
    e.offset = r.offset;
    e.length = r.length;
    e.lsn.store(r.lsn);
    e.state.store(static_cast<uint8_t>(r.reclaimed() ? RecordState::kCleaned : RecordState::kCompleted));
  }
  return Status::OK();
}

void Log::Yield() const {
  if (hooks_.yield) {
    hooks_.yield();
  } else {
    std::this_thread::yield();
  }
}

void Log::Preempt() const {
  if (hooks_.preempt) hooks_.preempt();
}

uint64_t Log::next_lsn() const {
  std::lock_guard g(*reserve_mu_);
  return next_lsn_;
}

Superline Log::superline() const {
  std::lock_guard g(*reserve_mu_);
  return sl_;
}

// ---- write pipeline ----

Result<ReservationId> Log::Reserve(uint64_t size) {
  Preempt();
  if (size > geo_.max_record()) return Status::InvalidArgument("record larger than max record size");
  const uint64_t fp = RecordFootprint(size);
  std::lock_guard g(*reserve_mu_);
  if (next_lsn_ - head_lsn_ + 1 >= entry_count_) return Status::LogFull("no free record slots");

  const uint64_t start = geo_.area_start(), end = geo_.area_end();
  const bool empty = head_lsn_ == next_lsn_;
  bool wrap = false;
  // Always leave one alignment unit free so tail never catches up with head.
  if (tail_pos_ >= head_pos_ || empty) {
    const uint64_t before_head = empty && tail_pos_ < head_pos_ ? 0 : head_pos_ - start;
    if (end - tail_pos_ >= fp && (end - tail_pos_ - fp) + before_head >= kRecordAlign) {
      wrap = false;
    } else if (before_head >= fp + kRecordAlign) {
      wrap = true;
    } else {
      return Status::LogFull("log full; cleanup must advance the head");
    }
  } else if (head_pos_ - tail_pos_ < fp + kRecordAlign) {
    return Status::LogFull("log full; cleanup must advance the head");
  }

  const uint64_t lsn = next_lsn_;
  if (wrap) {
    RecordHeader skip;
    skip.lsn = lsn;
    skip.flags = kFlagSkip;
    skip.epoch = static_cast<uint32_t>(epoch_);
    uint8_t buf[kRecordHeaderSize];
    skip.EncodeTo(buf);
    PMLOG_RETURN_IF_ERROR(region_.Store(tail_pos_, {buf, sizeof buf}));
    tail_pos_ = start;
  }
  const uint64_t offset = tail_pos_;
  tail_pos_ = geo_.Normalize(offset + fp);
  ++next_lsn_;

  auto& e = entry(lsn);
  e.offset = offset;
  e.length = static_cast<uint32_t>(size);
  e.state.store(static_cast<uint8_t>(RecordState::kReserved), std::memory_order_relaxed);
  e.lsn.store(lsn, std::memory_order_release);
  return ReservationId{lsn, offset, static_cast<uint32_t>(size)};
}

Status Log::CheckId(const ReservationId& id) const {
  if (!id.valid()) return Status::InvalidArgument("null reservation");
  const auto& e = entry(id.lsn);
  if (e.lsn.load(std::memory_order_acquire) != id.lsn || e.offset != id.offset || e.length != id.length) {
    return Status::WrongState("reservation is stale");
  }
  return Status::OK();
}

RecordState Log::state(const ReservationId& id) const {
  if (!CheckId(id).ok()) return RecordState::kFree;
  auto s = static_cast<RecordState>(entry(id.lsn).state.load(std::memory_order_acquire));
  if (s == RecordState::kCompleted && id.lsn <= last_forced_lsn()) return RecordState::kForced;
  return s;
}

Status Log::Copy(const ReservationId& id, ByteView data, uint64_t at) {
  Preempt();
  PMLOG_RETURN_IF_ERROR(CheckId(id));
  if (static_cast<RecordState>(entry(id.lsn).state.load(std::memory_order_acquire)) != RecordState::kReserved) {
    return Status::WrongState("copy after complete");
  }
  if (at > id.length || data.size() > id.length - at) return Status::OutOfRange("copy outside the record");
  return region_.Store(id.offset + kRecordHeaderSize + at, data);
}

Status Log::Complete(const ReservationId& id) {
  Preempt();
  PMLOG_RETURN_IF_ERROR(CheckId(id));
  auto& e = entry(id.lsn);
  uint8_t expected = static_cast<uint8_t>(RecordState::kReserved);
  if (!e.state.compare_exchange_strong(expected, static_cast<uint8_t>(RecordState::kCompleting))) {
    return Status::WrongState("record is not in reserved state");
  }
  RecordHeader h;
  h.lsn = id.lsn;
  h.length = id.length;
  h.flags = kFlagValid;
  h.epoch = static_cast<uint32_t>(epoch_);
  if (!config_.debug_skip_payload_crc) {
    auto payload = region_.Read(id.offset + kRecordHeaderSize, id.length);
    if (!payload.ok()) {
      e.state.store(static_cast<uint8_t>(RecordState::kReserved));
      return payload.status();
    }
    h.payload_crc = kernels::Crc32(*payload);
  }
  uint8_t buf[kRecordHeaderSize];
  h.EncodeTo(buf);
  Status s = region_.Store(id.offset, {buf, sizeof buf});
  if (!s.ok()) {
    e.state.store(static_cast<uint8_t>(RecordState::kReserved));
    return s;
  }
  e.state.store(static_cast<uint8_t>(RecordState::kCompleted), std::memory_order_release);
  uint64_t cur = max_completed_.load();
  while (cur < id.lsn && !max_completed_.compare_exchange_weak(cur, id.lsn)) {
  }
  return Status::OK();
}

Result<ForceResult> Log::Force(const ReservationId& id, uint64_t freq) {
  Preempt();
  PMLOG_RETURN_IF_ERROR(CheckId(id));
  auto s = static_cast<RecordState>(entry(id.lsn).state.load(std::memory_order_acquire));
  if (s == RecordState::kReserved || s == RecordState::kCompleting) {
    return Status::WrongState("force before complete");
  }
  if (freq > 1 && id.lsn % freq != 0) return ForceResult::kDeferred;
  return ForceTo(id.lsn);
}

Result<ForceResult> Log::ForceTo(uint64_t target) {
  std::lock_guard g(*force_mu_);
  uint64_t done = last_forced_.load(std::memory_order_acquire);
  if (target <= done) return ForceResult::kForced;

  WaitBudget budget(static_cast<bool>(hooks_.yield), config_.force_wait_ticks, config_.force_wait_timeout_ms);
  for (uint64_t l = done + 1; l <= target; ++l) {
    for (;;) {
      const auto& e = entry(l);
      if (e.lsn.load(std::memory_order_acquire) == l &&
          static_cast<RecordState>(e.state.load(std::memory_order_acquire)) >= RecordState::kCompleted) {
        break;
      }
      if (budget.Exhausted()) {
        return Status::Timeout("force waited too long for LSN " + std::to_string(l) + " to complete");
      }
      Yield();
    }
  }

  // Walk the batch instead of comparing end offsets: after a skip marker the
  // new end can land past the old one and still cover a full lap.
  ByteRange ranges[2];
  size_t n = 0;
  uint64_t seg = forced_end_pos_, pos = forced_end_pos_;
  for (uint64_t l = done + 1; l <= target; ++l) {
    const auto& e = entry(l);
    if (e.offset != pos) {
      // wrapped; [pos, area_end) is a skip marker or nothing
      if (n == 1) return Status::Corruption("force batch wraps twice");
      if (geo_.area_end() > seg) ranges[n++] = {seg, geo_.area_end() - seg};
      seg = geo_.area_start();
    }
    pos = e.offset + RecordFootprint(e.length);
  }
  if (pos > seg) ranges[n++] = {seg, pos - seg};
  PMLOG_RETURN_IF_ERROR(storage_.PersistRanges({ranges, n}));
  forced_end_pos_ = geo_.Normalize(pos);
  last_forced_.store(target, std::memory_order_release);
  return ForceResult::kForced;
}

uint64_t Log::CompletedFrontierLocked() const {
  uint64_t l = last_forced_.load(std::memory_order_acquire);
  for (;;) {
    const auto& e = entry(l + 1);
    if (e.lsn.load(std::memory_order_acquire) != l + 1 ||
        static_cast<RecordState>(e.state.load(std::memory_order_acquire)) < RecordState::kCompleted) {
      return l;
    }
    ++l;
  }
}

// Group commit: whoever finds the shared window full flushes every
// completed record and shrinks the window by what it forced.
bool Log::GroupMaybeForce(Status* error) {
  const auto g = static_cast<int64_t>(config_.policy.group_size);
  if (group_window_.load(std::memory_order_acquire) < g) return false;
  if (group_forcing_.exchange(true, std::memory_order_acq_rel)) return false;
  uint64_t before = last_forced_lsn();
  uint64_t target;
  {
    std::lock_guard lock(*force_mu_);
    target = CompletedFrontierLocked();
  }
  Status s;
  if (target > before) {
    auto r = ForceTo(target);
    if (!r.ok()) s = r.status();
  }
  group_window_.fetch_sub(static_cast<int64_t>(last_forced_lsn() - before), std::memory_order_acq_rel);
  group_forcing_.store(false, std::memory_order_release);
  if (!s.ok() && error) *error = s;
  return true;
}

Result<ReservationId> Log::Append(ByteView data, ForceResult* force_out) {
  const bool group = config_.policy.kind == ForcePolicy::Kind::kGroupCommit;
  if (group) {
    WaitBudget budget(static_cast<bool>(hooks_.yield), config_.force_wait_ticks, config_.force_wait_timeout_ms);
    while (group_window_.load(std::memory_order_acquire) >= static_cast<int64_t>(config_.policy.group_size)) {
      Status err;
      GroupMaybeForce(&err);
      if (!err.ok()) return err;
      if (budget.Exhausted()) return Status::Timeout("group commit window never drained");
      Yield();
    }
  }
  auto id = Reserve(data.size());
  if (!id.ok()) return id.status();
  PMLOG_RETURN_IF_ERROR(Copy(*id, data));
  PMLOG_RETURN_IF_ERROR(Complete(*id));

  ForceResult fr = ForceResult::kDeferred;
  switch (config_.policy.kind) {
    case ForcePolicy::Kind::kSync: {
      auto r = Force(*id, 1);
      if (!r.ok()) return r.status();
      fr = *r;
      break;
    }
    case ForcePolicy::Kind::kFrequency: {
      auto r = Force(*id, config_.policy.frequency);
      if (!r.ok()) return r.status();
      fr = *r;
      break;
    }
    case ForcePolicy::Kind::kGroupCommit: {
      group_window_.fetch_add(1, std::memory_order_acq_rel);
      Status err;
      GroupMaybeForce(&err);
      if (!err.ok()) return err;
      fr = id->lsn <= last_forced_lsn() ? ForceResult::kForced : ForceResult::kDeferred;
      break;
    }
  }
  if (force_out) *force_out = fr;
  return id;
}

Status Log::Flush() {
  uint64_t target;
  {
    std::lock_guard lock(*force_mu_);
    target = CompletedFrontierLocked();
  }
  auto r = ForceTo(target);
  return r.ok() ? Status::OK() : r.status();
}

// ---- reclamation ----

Status Log::WriteSuperline(const Superline& next) {
  PMLOG_RETURN_IF_ERROR(cell_.AtomicWrite(next.Encode(), storage_));
  sl_ = next;
  return Status::OK();
}

Status Log::Cleanup(const ReservationId& id) {
  Preempt();
  PMLOG_RETURN_IF_ERROR(CheckId(id));
  auto& e = entry(id.lsn);
  if (state(id) != RecordState::kForced) return Status::WrongState("cleanup of a record that is not forced");

  uint8_t flags = kFlagReclaimed;
  PMLOG_RETURN_IF_ERROR(region_.Store(id.offset + 16, {&flags, 1}));
  PMLOG_RETURN_IF_ERROR(storage_.PersistRange(id.offset + 16, 1));
  e.state.store(static_cast<uint8_t>(RecordState::kCleaned), std::memory_order_release);

  std::lock_guard c(*cleanup_mu_);
  std::lock_guard g(*reserve_mu_);
  uint64_t h = head_lsn_;
  while (h < next_lsn_ && entry(h).lsn.load() == h &&
         static_cast<RecordState>(entry(h).state.load(std::memory_order_acquire)) == RecordState::kCleaned) {
    ++h;
  }
  if (h == head_lsn_) return Status::OK();
  Superline next = sl_;
  next.head_offset = h == next_lsn_ ? tail_pos_ : entry(h).offset;
  next.start_lsn = h;
  next.update_epoch = epoch_;
  ++next.seq;
  PMLOG_RETURN_IF_ERROR(WriteSuperline(next));
  head_lsn_ = h;
  head_pos_ = geo_.Normalize(next.head_offset);
  return Status::OK();
}

Status Log::CleanupAll() {
  std::lock_guard c(*cleanup_mu_);
  std::lock_guard f(*force_mu_);
  std::lock_guard g(*reserve_mu_);
  if (last_forced_lsn() + 1 != next_lsn_) return Status::WrongState("cleanup_all with unforced records");
  Superline next = sl_;
  next.head_offset = geo_.area_start();
  next.start_lsn = next_lsn_;
  next.update_epoch = epoch_;
  ++next.seq;
  PMLOG_RETURN_IF_ERROR(WriteSuperline(next));
  Bytes zero(geo_.area_size(), 0);
  PMLOG_RETURN_IF_ERROR(region_.Store(geo_.area_start(), zero));
  PMLOG_RETURN_IF_ERROR(storage_.PersistRange(geo_.area_start(), zero.size()));
  for (uint64_t l = head_lsn_; l < next_lsn_; ++l) {
    entry(l).state.store(static_cast<uint8_t>(RecordState::kCleaned));
  }
  head_lsn_ = next_lsn_;
  head_pos_ = tail_pos_ = forced_end_pos_ = geo_.area_start();
  return Status::OK();
}

RecoveryIterator Log::NewIterator() const {
  ByteView image = region_.volatile_image();
  auto sl = ReadSuperline(image);
  ScanResult scan = sl.ok() ? ScanRecords(image, *sl) : ScanResult{};
  if (!sl.ok()) scan.end = EndReason::kNotValid;
  return RecoveryIterator(std::move(scan), image);
}

}  // namespace pmlog::log
