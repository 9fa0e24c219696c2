#include "pmlog/pmem/region.h"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstring>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <stdexcept>

#include "pmlog/kernels/line_diff.h"

namespace pmlog::pmem {

namespace {
constexpr size_t kStripes = 256;
}  // namespace

struct PersistenceRegion::Sync {
  // Shared by Store/Persist/Read, exclusive while a crash snapshot is taken.
  mutable std::shared_mutex state;
  mutable std::array<std::mutex, kStripes> lines;

  std::atomic<bool> eviction_on{false};
  std::mutex eviction_mu;
  EvictionPolicy eviction;
  std::mt19937_64 eviction_rng;

  std::mutex trace_mu;
  bool trace_on = false;
  std::vector<Event> trace;

  std::atomic<uint64_t> crash_at{0};
  std::function<void(uint64_t)> on_capture;
  std::mutex snapshot_mu;
  std::optional<CrashSnapshot> snapshot;
};

PersistenceRegion::PersistenceRegion(size_t capacity, size_t line_size)
    : capacity_(capacity),
      line_size_(line_size),
      volatile_(capacity, 0),
      persistent_(capacity, 0),
      dirty_(new std::atomic<uint8_t>[capacity / (line_size ? line_size : 1)]),
      sync_(std::make_unique<Sync>()) {
  if (line_size_ == 0 || capacity_ % line_size_ != 0) {
    throw std::invalid_argument("region capacity must be a multiple of the cache line size");
  }
  for (size_t i = 0; i < line_count(); ++i) dirty_[i].store(0, std::memory_order_relaxed);
}

PersistenceRegion::~PersistenceRegion() {
  if (backing_fd_ >= 0) ::close(backing_fd_);
}

PersistenceRegion::PersistenceRegion(PersistenceRegion&& o) noexcept
    : capacity_(o.capacity_),
      line_size_(o.line_size_),
      volatile_(std::move(o.volatile_)),
      persistent_(std::move(o.persistent_)),
      dirty_(std::move(o.dirty_)),
      sync_(std::move(o.sync_)),
      events_(o.events_.load()),
      backing_path_(std::move(o.backing_path_)),
      backing_fd_(o.backing_fd_),
      line_ns_(o.line_ns_),
      fence_ns_(o.fence_ns_) {
  o.backing_fd_ = -1;
  o.capacity_ = 0;
}

PersistenceRegion& PersistenceRegion::operator=(PersistenceRegion&& o) noexcept {
  if (this == &o) return *this;
  if (backing_fd_ >= 0) ::close(backing_fd_);
  capacity_ = o.capacity_;
  line_size_ = o.line_size_;
  volatile_ = std::move(o.volatile_);
  persistent_ = std::move(o.persistent_);
  dirty_ = std::move(o.dirty_);
  sync_ = std::move(o.sync_);
  events_.store(o.events_.load());
  backing_path_ = std::move(o.backing_path_);
  backing_fd_ = o.backing_fd_;
  line_ns_ = o.line_ns_;
  fence_ns_ = o.fence_ns_;
  o.backing_fd_ = -1;
  o.capacity_ = 0;
  return *this;
}

Result<PersistenceRegion> PersistenceRegion::OpenBacked(const std::string& path, size_t capacity,
                                                        size_t line_size) {
  int fd = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd < 0) return Status::IoError("open " + path + ": " + std::strerror(errno));
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    return Status::IoError("stat " + path);
  }
  PersistenceRegion region(capacity, line_size);
  if (static_cast<size_t>(st.st_size) == capacity) {
    size_t done = 0;
    while (done < capacity) {
      ssize_t n = ::pread(fd, region.persistent_.data() + done, capacity - done, static_cast<off_t>(done));
      if (n <= 0) {
        ::close(fd);
        return Status::IoError("read " + path);
      }
      done += static_cast<size_t>(n);
    }
    region.volatile_ = region.persistent_;
  } else if (st.st_size == 0) {
    if (::ftruncate(fd, static_cast<off_t>(capacity)) != 0) {
      ::close(fd);
      return Status::IoError("truncate " + path);
    }
  } else {
    ::close(fd);
    return Status::InvalidArgument(path + ": size does not match region capacity");
  }
  region.backing_path_ = path;
  region.backing_fd_ = fd;
  return region;
}

Status PersistenceRegion::CheckRange(uint64_t offset, uint64_t length) const {
  if (offset > capacity_ || length > capacity_ - offset) {
    return Status::OutOfRange("range [" + std::to_string(offset) + ", +" + std::to_string(length) +
                              ") exceeds capacity " + std::to_string(capacity_));
  }
  return Status::OK();
}

Status PersistenceRegion::Store(uint64_t offset, ByteView data) {
  PMLOG_RETURN_IF_ERROR(CheckRange(offset, data.size()));
  if (data.empty()) return Status::OK();
  uint64_t first = offset / line_size_;
  uint64_t last = (offset + data.size() - 1) / line_size_;
  {
    std::shared_lock state(sync_->state);
    for (uint64_t line = first; line <= last; ++line) {
      uint64_t lo = std::max<uint64_t>(offset, line * line_size_);
      uint64_t hi = std::min<uint64_t>(offset + data.size(), (line + 1) * line_size_);
      std::lock_guard guard(sync_->lines[line % kStripes]);
      std::memcpy(volatile_.data() + lo, data.data() + (lo - offset), hi - lo);
      dirty_[line].store(1, std::memory_order_relaxed);
    }
    if (sync_->eviction_on.load(std::memory_order_relaxed)) {
      std::lock_guard ev(sync_->eviction_mu);
      std::bernoulli_distribution evict(sync_->eviction.probability);
      for (uint64_t line = first; line <= last; ++line) {
        if (!evict(sync_->eviction_rng)) continue;
        std::lock_guard guard(sync_->lines[line % kStripes]);
        PersistLineLocked(line);
      }
    }
  }
  AfterEvent(EventKind::kStore, offset, data.size());
  return Status::OK();
}

void PersistenceRegion::PersistLineLocked(uint64_t line) {
  if (dirty_[line].load(std::memory_order_relaxed) == 0) return;
  size_t off = line * line_size_;
  std::memcpy(persistent_.data() + off, volatile_.data() + off, line_size_);
  dirty_[line].store(0, std::memory_order_relaxed);
  WriteThrough(line);
}

void PersistenceRegion::WriteThrough(uint64_t line) {
  if (backing_fd_ < 0) return;
  size_t off = line * line_size_;
  // Best effort: a failing backing file surfaces on the next OpenBacked.
  ssize_t n = ::pwrite(backing_fd_, persistent_.data() + off, line_size_, static_cast<off_t>(off));
  (void)n;
}

Status PersistenceRegion::Persist(uint64_t offset, uint64_t length) {
  PMLOG_RETURN_IF_ERROR(CheckRange(offset, length));
  if (length == 0) return Status::OK();
  uint64_t first = offset / line_size_;
  uint64_t last = (offset + length - 1) / line_size_;
  {
    std::shared_lock state(sync_->state);
    for (uint64_t line = first; line <= last; ++line) {
      std::lock_guard guard(sync_->lines[line % kStripes]);
      PersistLineLocked(line);
    }
  }
  AfterEvent(EventKind::kPersist, offset, length);
  if (line_ns_ || fence_ns_) {
    const auto until = std::chrono::steady_clock::now() +
                       std::chrono::nanoseconds(line_ns_ * (last - first + 1) + fence_ns_);
    while (std::chrono::steady_clock::now() < until) {
    }
  }
  return Status::OK();
}

void PersistenceRegion::SetPersistLatency(uint64_t per_line_ns, uint64_t per_fence_ns) {
  line_ns_ = per_line_ns;
  fence_ns_ = per_fence_ns;
}

Status PersistenceRegion::Read(uint64_t offset, MutableByteView out) const {
  PMLOG_RETURN_IF_ERROR(CheckRange(offset, out.size()));
  if (out.empty()) return Status::OK();
  uint64_t first = offset / line_size_;
  uint64_t last = (offset + out.size() - 1) / line_size_;
  std::shared_lock state(sync_->state);
  for (uint64_t line = first; line <= last; ++line) {
    uint64_t lo = std::max<uint64_t>(offset, line * line_size_);
    uint64_t hi = std::min<uint64_t>(offset + out.size(), (line + 1) * line_size_);
    std::lock_guard guard(sync_->lines[line % kStripes]);
    std::memcpy(out.data() + (lo - offset), volatile_.data() + lo, hi - lo);
  }
  return Status::OK();
}

Result<Bytes> PersistenceRegion::Read(uint64_t offset, uint64_t length) const {
  PMLOG_RETURN_IF_ERROR(CheckRange(offset, length));
  Bytes out(length);
  PMLOG_RETURN_IF_ERROR(Read(offset, MutableByteView(out)));
  return out;
}

void PersistenceRegion::AfterEvent(EventKind kind, uint64_t offset, uint64_t length) {
  uint64_t seq = events_.fetch_add(1, std::memory_order_relaxed) + 1;
  {
    std::lock_guard guard(sync_->trace_mu);
    if (sync_->trace_on) sync_->trace.push_back(Event{seq, kind, offset, length});
  }
  uint64_t at = sync_->crash_at.load(std::memory_order_relaxed);
  if (at == 0 || seq < at) return;
  uint64_t expected = at;
  if (!sync_->crash_at.compare_exchange_strong(expected, 0)) return;
  CrashSnapshot snap = Snapshot();
  snap.event_seq = seq;
  {
    std::lock_guard guard(sync_->snapshot_mu);
    sync_->snapshot = std::move(snap);
  }
  if (sync_->on_capture) sync_->on_capture(seq);
}

CrashSnapshot PersistenceRegion::Snapshot() const {
  std::unique_lock state(sync_->state);
  CrashSnapshot snap;
  snap.event_seq = events_.load(std::memory_order_relaxed);
  snap.line_size = line_size_;
  snap.volatile_image = volatile_;
  snap.persistent_image = persistent_;
  for (size_t i = 0; i < line_count(); ++i) {
    if (dirty_[i].load(std::memory_order_relaxed) != 0) snap.dirty_lines.push_back(i);
  }
  return snap;
}

std::vector<uint64_t> PersistenceRegion::DirtyLines() const {
  std::vector<uint64_t> lines;
  for (size_t i = 0; i < line_count(); ++i) {
    if (dirty_[i].load(std::memory_order_relaxed) != 0) lines.push_back(i);
  }
  return lines;
}

bool PersistenceRegion::IsDirty(uint64_t line) const {
  return line < line_count() && dirty_[line].load(std::memory_order_relaxed) != 0;
}

bool PersistenceRegion::CheckInvariants() const {
  std::vector<uint64_t> differing;
  kernels::FindDifferingLines(volatile_image(), persistent_image(), line_size_, &differing);
  return std::all_of(differing.begin(), differing.end(), [&](uint64_t line) { return IsDirty(line); });
}

namespace {

std::vector<bool> SurvivingMask(const std::vector<uint64_t>& dirty, const FaultPlan& plan) {
  std::vector<bool> keep(dirty.size(), false);
  switch (plan.survival.kind) {
    case SurvivalPolicy::Kind::kDropAll:
      break;
    case SurvivalPolicy::Kind::kKeepAll:
      keep.assign(dirty.size(), true);
      break;
    case SurvivalPolicy::Kind::kRandom: {
      std::mt19937_64 rng(plan.seed);
      std::bernoulli_distribution coin(plan.survival.keep_probability);
      for (size_t i = 0; i < dirty.size(); ++i) keep[i] = coin(rng);
      break;
    }
    case SurvivalPolicy::Kind::kExplicit: {
      const auto& lines = plan.survival.surviving_lines;
      for (size_t i = 0; i < dirty.size(); ++i) {
        keep[i] = std::find(lines.begin(), lines.end(), dirty[i]) != lines.end();
      }
      break;
    }
  }
  return keep;
}

void ApplyToImages(Bytes& vol, Bytes& pers, size_t line_size, const std::vector<uint64_t>& dirty,
                   const FaultPlan& plan) {
  std::vector<bool> keep = SurvivingMask(dirty, plan);
  for (size_t i = 0; i < dirty.size(); ++i) {
    if (!keep[i]) continue;
    size_t off = dirty[i] * line_size;
    std::memcpy(pers.data() + off, vol.data() + off, line_size);
  }
  for (const auto& err : plan.media_errors) {
    uint64_t end = std::min<uint64_t>(err.offset + err.length, pers.size());
    for (uint64_t b = err.offset; b < end; ++b) pers[b] ^= plan.corruption_mask;
  }
  vol = pers;
}

}  // namespace

PersistenceRegion CrashSnapshot::Materialize(const FaultPlan& plan) const {
  PersistenceRegion out(persistent_image.size(), line_size);
  out.volatile_ = volatile_image;
  out.persistent_ = persistent_image;
  ApplyToImages(out.volatile_, out.persistent_, line_size, dirty_lines, plan);
  return out;
}

void PersistenceRegion::ApplyCrash(const std::vector<uint64_t>& dirty, const FaultPlan& plan) {
  ApplyToImages(volatile_, persistent_, line_size_, dirty, plan);
  for (size_t i = 0; i < line_count(); ++i) dirty_[i].store(0, std::memory_order_relaxed);
  if (backing_fd_ >= 0) {
    for (size_t line = 0; line < line_count(); ++line) WriteThrough(line);
  }
}

PersistenceRegion PersistenceRegion::SimulateCrash(const FaultPlan& plan) const {
  PersistenceRegion out = Clone();
  out.CrashInPlace(plan);
  return out;
}

void PersistenceRegion::CrashInPlace(const FaultPlan& plan) {
  std::unique_lock state(sync_->state);
  std::vector<uint64_t> dirty;
  for (size_t i = 0; i < line_count(); ++i) {
    if (dirty_[i].load(std::memory_order_relaxed) != 0) dirty.push_back(i);
  }
  ApplyCrash(dirty, plan);
}

Status PersistenceRegion::InjectMediaError(uint64_t offset, uint64_t length, uint8_t mask) {
  PMLOG_RETURN_IF_ERROR(CheckRange(offset, length));
  std::unique_lock state(sync_->state);
  for (uint64_t b = offset; b < offset + length; ++b) {
    persistent_[b] ^= mask;
    if (dirty_[b / line_size_].load(std::memory_order_relaxed) == 0) volatile_[b] ^= mask;
  }
  if (backing_fd_ >= 0 && length > 0) {
    for (uint64_t line = offset / line_size_; line <= (offset + length - 1) / line_size_; ++line) {
      WriteThrough(line);
    }
  }
  return Status::OK();
}

PersistenceRegion PersistenceRegion::Clone() const {
  std::unique_lock state(sync_->state);
  PersistenceRegion out(capacity_, line_size_);
  out.volatile_ = volatile_;
  out.persistent_ = persistent_;
  for (size_t i = 0; i < line_count(); ++i) {
    out.dirty_[i].store(dirty_[i].load(std::memory_order_relaxed), std::memory_order_relaxed);
  }
  return out;
}

void PersistenceRegion::SetEviction(EvictionPolicy policy) {
  std::lock_guard guard(sync_->eviction_mu);
  sync_->eviction = policy;
  sync_->eviction_rng.seed(policy.seed);
  sync_->eviction_on.store(policy.probability > 0);
}

void PersistenceRegion::EnableTrace(bool on) {
  std::lock_guard guard(sync_->trace_mu);
  sync_->trace_on = on;
}

std::vector<Event> PersistenceRegion::TakeTrace() {
  std::lock_guard guard(sync_->trace_mu);
  return std::exchange(sync_->trace, {});
}

void PersistenceRegion::ArmCrashPoint(uint64_t seq, std::function<void(uint64_t)> on_capture) {
  {
    std::lock_guard guard(sync_->snapshot_mu);
    sync_->snapshot.reset();
  }
  sync_->on_capture = std::move(on_capture);
  sync_->crash_at.store(seq);
}

void PersistenceRegion::DisarmCrashPoint() { sync_->crash_at.store(0); }

std::optional<CrashSnapshot> PersistenceRegion::TakeCrashSnapshot() {
  std::lock_guard guard(sync_->snapshot_mu);
  return std::exchange(sync_->snapshot, std::nullopt);
}

Status PersistenceRegion::SyncMetadata() const {
  if (backing_path_.empty()) return Status::InvalidArgument("region is not file backed");
  std::vector<uint64_t> dirty = DirtyLines();
  Bytes buf(16 + 8 * dirty.size());
  EncodeFixed64(buf.data(), line_size_);
  EncodeFixed64(buf.data() + 8, dirty.size());
  for (size_t i = 0; i < dirty.size(); ++i) EncodeFixed64(buf.data() + 16 + 8 * i, dirty[i]);
  std::string side = backing_path_ + ".dirty";
  int fd = ::open(side.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) return Status::IoError("open " + side);
  ssize_t n = ::write(fd, buf.data(), buf.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(buf.size())) return Status::IoError("write " + side);
  return Status::OK();
}

}  // namespace pmlog::pmem
