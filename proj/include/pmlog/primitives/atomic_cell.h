#pragma once

#include <cstdint>
#include <functional>

#include "pmlog/bytes.h"
#include "pmlog/pmem/region.h"
#include "pmlog/primitives/persist_sink.h"
#include "pmlog/status.h"

namespace pmlog::primitives {

// Copy-on-write double buffer. Layout from the cell base:
//
//   [index line]  u64 index, alone on its cache line (kPersistent mode only)
//   buf[0]        payload[size] | u32 crc, padded to a cache-line multiple
//   buf[1]        same
//
// Writes always go to buf[!index]; the index flips only after that buffer is
// durable. In kVolatile mode the index lives in memory and Open() re-derives
// it from buffer contents with the owner's chooser.
class AtomicCell {
 public:
  enum class IndexMode { kPersistent, kVolatile };

  // Given two buffers that both pass their checksum, return which one (0 or
  // 1) holds the most recent value.
  using Chooser = std::function<int(ByteView buf0, ByteView buf1)>;

  AtomicCell(pmem::PersistenceRegion& region, uint64_t base, uint32_t payload_size, IndexMode mode,
             Chooser chooser = nullptr);

  static size_t BufferStride(uint32_t payload_size);
  static size_t Footprint(uint32_t payload_size, IndexMode mode);
  size_t footprint() const { return Footprint(size_, mode_); }

  uint64_t buffer_offset(int which) const;
  uint64_t index_offset() const { return base_; }
  int index() const { return index_; }
  uint32_t payload_size() const { return size_; }

  // Initialises buf[0] with `initial`, invalidates buf[1] and sets index 0.
  Status Format(ByteView initial, PersistSink& sink);

  // Re-derives the index after a restart. kUnrecoverable if no buffer holds
  // a valid value.
  Status Open();

  Status AtomicWrite(ByteView data, PersistSink& sink);
  Result<Bytes> AtomicRead() const;

  // Checksum-validated contents of one buffer, independent of the index.
  Result<Bytes> ReadBuffer(int which) const;

  // Points the in-memory index at `which` (volatile mode recovery helpers).
  void set_index(int which) { index_ = which; }

 private:
  Status StoreBuffer(int which, ByteView data);

  pmem::PersistenceRegion& region_;
  uint64_t base_;
  uint32_t size_;
  IndexMode mode_;
  Chooser chooser_;
  int index_ = 0;
};

}  // namespace pmlog::primitives
