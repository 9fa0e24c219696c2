#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pmlog/bytes.h"
#include "pmlog/status.h"

namespace pmlog::pmem {

inline constexpr size_t kCacheLineSize = 64;

// Which dirty lines make it to media when the power fails.
struct SurvivalPolicy {
  enum class Kind { kDropAll, kKeepAll, kRandom, kExplicit };
  Kind kind = Kind::kDropAll;
  double keep_probability = 0.5;          // kRandom
  std::vector<uint64_t> surviving_lines;  // kExplicit: line indices that keep new bytes
};

struct MediaError {
  uint64_t offset = 0;
  uint64_t length = 0;
};

struct FaultPlan {
  std::vector<MediaError> media_errors;
  SurvivalPolicy survival;
  uint64_t seed = 0;
  uint8_t corruption_mask = 0xFF;  // media-error bytes are XORed with this

  static FaultPlan DropAll() { return {}; }
  static FaultPlan KeepAll() {
    FaultPlan p;
    p.survival.kind = SurvivalPolicy::Kind::kKeepAll;
    return p;
  }
  static FaultPlan Random(uint64_t seed, double keep_probability = 0.5) {
    FaultPlan p;
    p.seed = seed;
    p.survival.kind = SurvivalPolicy::Kind::kRandom;
    p.survival.keep_probability = keep_probability;
    return p;
  }
  static FaultPlan KeepLines(std::vector<uint64_t> lines) {
    FaultPlan p;
    p.survival.kind = SurvivalPolicy::Kind::kExplicit;
    p.survival.surviving_lines = std::move(lines);
    return p;
  }
};

// Spontaneous write-back of just-stored lines, modelling cache eviction.
struct EvictionPolicy {
  double probability = 0.0;
  uint64_t seed = 0;
};

enum class EventKind : uint8_t { kStore, kPersist };

struct Event {
  uint64_t seq = 0;
  EventKind kind = EventKind::kStore;
  uint64_t offset = 0;
  uint64_t length = 0;
};

class PersistenceRegion;

// Frozen copy of the cache/media state at one point of the event stream.
struct CrashSnapshot {
  uint64_t event_seq = 0;
  size_t line_size = kCacheLineSize;
  Bytes volatile_image;
  Bytes persistent_image;
  std::vector<uint64_t> dirty_lines;

  PersistenceRegion Materialize(const FaultPlan& plan) const;
};

// An emulated byte-addressable persistence domain. Stores land in a volatile
// image (what loads observe); only Persist() copies whole cache lines to the
// persistent image (what a crash leaves behind).
//
// Store/Persist/Read are safe from many threads on disjoint byte ranges, even
// when those ranges share a cache line. SimulateCrash, Clone and the raw image
// accessors require quiescence.
class PersistenceRegion {
 public:
  explicit PersistenceRegion(size_t capacity, size_t line_size = kCacheLineSize);
  ~PersistenceRegion();

  PersistenceRegion(PersistenceRegion&&) noexcept;
  PersistenceRegion& operator=(PersistenceRegion&&) noexcept;
  PersistenceRegion(const PersistenceRegion&) = delete;
  PersistenceRegion& operator=(const PersistenceRegion&) = delete;

  // Region whose persistent image is written through to `path` on every
  // persist. An existing file of the right size is loaded as-is (the state a
  // crash would have left).
  static Result<PersistenceRegion> OpenBacked(const std::string& path, size_t capacity,
                                              size_t line_size = kCacheLineSize);

  size_t capacity() const { return capacity_; }
  size_t line_size() const { return line_size_; }
  size_t line_count() const { return capacity_ / line_size_; }

  Status Store(uint64_t offset, ByteView data);
  Status Persist(uint64_t offset, uint64_t length);
  Status Read(uint64_t offset, MutableByteView out) const;
  Result<Bytes> Read(uint64_t offset, uint64_t length) const;

  // Returns the post-crash region; this region is left untouched.
  PersistenceRegion SimulateCrash(const FaultPlan& plan) const;
  // Same, replacing this region's state (a node losing power).
  void CrashInPlace(const FaultPlan& plan);

  // At-rest corruption: XOR `mask` into the persistent image (and into the
  // volatile image of clean lines, which loads would fetch from media).
  Status InjectMediaError(uint64_t offset, uint64_t length, uint8_t mask = 0xFF);

  PersistenceRegion Clone() const;

  ByteView volatile_image() const { return {volatile_.data(), volatile_.size()}; }
  ByteView persistent_image() const { return {persistent_.data(), persistent_.size()}; }
  std::vector<uint64_t> DirtyLines() const;
  bool IsDirty(uint64_t line) const;

  // Clean lines must be byte-identical in both images.
  bool CheckInvariants() const;

  void SetEviction(EvictionPolicy policy);

  // Persist cost model: busy-waits `per_line_ns` for each flushed line plus
  // `per_fence_ns` per Persist call. Zero by default.
  void SetPersistLatency(uint64_t per_line_ns, uint64_t per_fence_ns = 0);

  // Event stream instrumentation.
  uint64_t event_count() const { return events_.load(std::memory_order_relaxed); }
  void EnableTrace(bool on);
  std::vector<Event> TakeTrace();

  // Capture a CrashSnapshot right after event number `seq` (1-based).
  // `on_capture` runs on the thread that produced the event, after capture.
  void ArmCrashPoint(uint64_t seq, std::function<void(uint64_t)> on_capture = nullptr);
  void DisarmCrashPoint();
  std::optional<CrashSnapshot> TakeCrashSnapshot();
  CrashSnapshot Snapshot() const;

  // Rewrites the dirty-line sidecar ("<path>.dirty") of a backed region.
  Status SyncMetadata() const;
  const std::string& backing_path() const { return backing_path_; }

 private:
  friend struct CrashSnapshot;
  struct Sync;

  Status CheckRange(uint64_t offset, uint64_t length) const;
  void PersistLineLocked(uint64_t line);
  void AfterEvent(EventKind kind, uint64_t offset, uint64_t length);
  void ApplyCrash(const std::vector<uint64_t>& dirty, const FaultPlan& plan);
  void WriteThrough(uint64_t line);

  size_t capacity_;
  size_t line_size_;
  Bytes volatile_;
  Bytes persistent_;
  std::unique_ptr<std::atomic<uint8_t>[]> dirty_;
  std::unique_ptr<Sync> sync_;
  std::atomic<uint64_t> events_{0};
  std::string backing_path_;
  int backing_fd_ = -1;
  uint64_t line_ns_ = 0;
  uint64_t fence_ns_ = 0;
};

}  // namespace pmlog::pmem
