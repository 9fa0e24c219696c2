#pragma once

#include <span>
#include <vector>

#include "pmlog/bytes.h"
#include "pmlog/pmem/region.h"
#include "pmlog/status.h"

namespace pmlog::primitives {

// The persistence / replication primitive as seen by the integrity and
// atomicity primitives: make bytes already stored in the source region
// durable. One call is one flush+fence (local) or one replicate-and-force
// round (remote).
class PersistSink {
 public:
  virtual ~PersistSink() = default;
  virtual Status PersistRanges(std::span<const ByteRange> ranges) = 0;

  Status PersistRange(uint64_t offset, uint64_t length) {
    ByteRange r{offset, length};
    return PersistRanges({&r, 1});
  }
};

class LocalPersistSink final : public PersistSink {
 public:
  explicit LocalPersistSink(pmem::PersistenceRegion& region) : region_(region) {}

  Status PersistRanges(std::span<const ByteRange> ranges) override {
    for (const auto& r : ranges) PMLOG_RETURN_IF_ERROR(region_.Persist(r.offset, r.length));
    return Status::OK();
  }

 private:
  pmem::PersistenceRegion& region_;
};

// Forwards to another sink and records every call; used to assert how many
// flush rounds a primitive issues.
class CountingSink final : public PersistSink {
 public:
  explicit CountingSink(PersistSink& inner) : inner_(inner) {}

  Status PersistRanges(std::span<const ByteRange> ranges) override {
    ++calls_;
    last_.assign(ranges.begin(), ranges.end());
    if (fail_) return Status::Timeout("injected sink failure");
    return inner_.PersistRanges(ranges);
  }

  int calls() const { return calls_; }
  const std::vector<ByteRange>& last_ranges() const { return last_; }
  void set_fail(bool fail) { fail_ = fail; }

 private:
  PersistSink& inner_;
  int calls_ = 0;
  bool fail_ = false;
  std::vector<ByteRange> last_;
};

}  // namespace pmlog::primitives
