#pragma once

#include <cstdint>

#include "pmlog/bytes.h"
#include "pmlog/pmem/region.h"
#include "pmlog/primitives/persist_sink.h"
#include "pmlog/status.h"

namespace pmlog::primitives {

// On-media layout, little-endian, starting at the slot base:
//
//   +0   u32 size          payload length in bytes
//   +4   u32 meta          opaque tag (record type etc.)
//   +8   u32 header_check  CRC-32 of bytes [+0, +8) or a caller-supplied value
//   +12  payload[size]
//   +12+size u32 data_crc  CRC-32 of the payload
//
// Nothing is ordered between the header, payload and trailer: the checksums
// detect any torn combination, so a single persist covers the whole slot.
class IntegritySlot {
 public:
  static constexpr size_t kHeaderSize = 12;
  static constexpr size_t kTrailerSize = 4;

  enum class HeaderCheck { kCrc, kExpectedValue };

  IntegritySlot(pmem::PersistenceRegion& region, uint64_t base, uint32_t payload_capacity,
                HeaderCheck mode = HeaderCheck::kCrc, uint32_t expected_check = 0)
      : region_(region), base_(base), capacity_(payload_capacity), mode_(mode), expected_(expected_check) {}

  // Bytes of media the slot may touch.
  size_t footprint() const { return kHeaderSize + capacity_ + kTrailerSize; }
  uint64_t base() const { return base_; }

  // Issues exactly one PersistSink call.
  Status ReliableWrite(ByteView data, PersistSink& sink, uint32_t meta = 0);

  // kHeaderInvalid when the header fails validation (size never trusted);
  // kDataInvalid when the payload checksum mismatches.
  Result<Bytes> ReliableRead(uint32_t* meta = nullptr) const;

 private:
  uint32_t HeaderCheckFor(const uint8_t* header8) const;

  pmem::PersistenceRegion& region_;
  uint64_t base_;
  uint32_t capacity_;
  HeaderCheck mode_;
  uint32_t expected_;
};

}  // namespace pmlog::primitives
