#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "pmlog/bytes.h"
#include "pmlog/status.h"

namespace pmlog::log {

// On-media layout of a log region of `capacity` bytes:
//
//   [0, 64)     superline copy 0   } AtomicCell, volatile index
//   [64, 128)   superline copy 1   }
//   [128, cap)  record area, a circular buffer of 32-byte aligned records
//
// Superline payload (little-endian), followed by the cell's u32 CRC at +48:
//   +0  u64 magic          kSuperlineMagic
//   +8  u64 epoch          bumped by every recovery
//   +16 u64 head_offset    region offset of the oldest live record
//   +24 u64 start_lsn      LSN expected at head_offset
//   +32 u64 update_epoch   epoch of the last head change made by the log itself
//   +40 u64 seq            superline write counter, picks the newer copy
//
// Record: 24-byte header then payload, padded to a 32-byte multiple.
//   +0  u64 lsn
//   +8  u32 length         payload bytes
//   +12 u32 payload_crc    CRC-32 of the payload only
//   +16 u8  flags          bit0 valid, bit1 skip marker, bit2 reclaimed
//   +17 3 bytes zero
//   +20 u32 epoch          low 32 bits of the writer's epoch
//
// A 32-byte aligned header never straddles a cache line, so it is persisted
// (or lost) as a unit. A record never wraps: the gap before the buffer end is
// covered by a skip marker carrying the LSN of the record placed at the start.
inline constexpr uint64_t kSuperlineMagic = 0x314C53474F4C4D50ull;  // "PMLOGSL1"
inline constexpr size_t kSuperlinePayload = 48;
inline constexpr size_t kSuperlineCopySize = 64;
inline constexpr size_t kRecordAreaStart = 2 * kSuperlineCopySize;
inline constexpr size_t kRecordHeaderSize = 24;
inline constexpr size_t kRecordAlign = 32;

inline constexpr uint8_t kFlagValid = 1u << 0;
inline constexpr uint8_t kFlagSkip = 1u << 1;
inline constexpr uint8_t kFlagReclaimed = 1u << 2;

struct Superline {
  uint64_t magic = kSuperlineMagic;
  uint64_t epoch = 1;
  uint64_t head_offset = kRecordAreaStart;
  uint64_t start_lsn = 1;
  uint64_t update_epoch = 1;
  uint64_t seq = 0;

  Bytes Encode() const;
  static Superline Decode(ByteView payload);
  bool operator==(const Superline&) const = default;
};

// Payload plus checksum exactly as the superline AtomicCell lays out one copy
// (kSuperlinePayload + 4 bytes at dst).
void EncodeSuperlineCopy(uint8_t* dst, const Superline& sl);

// Which of two CRC-valid superline copies is newer (0 or 1).
int ChooseSuperline(ByteView copy0, ByteView copy1);

struct RecordHeader {
  uint64_t lsn = 0;
  uint32_t length = 0;
  uint32_t payload_crc = 0;
  uint8_t flags = 0;
  uint32_t epoch = 0;

  void EncodeTo(uint8_t* dst) const;
  static RecordHeader Decode(const uint8_t* src);
};

inline uint64_t RecordFootprint(uint64_t length) {
  return (kRecordHeaderSize + length + kRecordAlign - 1) / kRecordAlign * kRecordAlign;
}

class Geometry {
 public:
  explicit Geometry(uint64_t capacity) : capacity_(capacity) {}

  static Status Validate(uint64_t capacity);

  uint64_t capacity() const { return capacity_; }
  uint64_t area_start() const { return kRecordAreaStart; }
  uint64_t area_end() const { return capacity_; }
  uint64_t area_size() const { return capacity_ - kRecordAreaStart; }
  uint64_t max_record() const { return area_size() / 4 / kRecordAlign * kRecordAlign - kRecordHeaderSize; }
  uint64_t max_records() const { return area_size() / kRecordAlign; }

  uint64_t Normalize(uint64_t pos) const { return pos == area_end() ? area_start() : pos; }
  bool InArea(uint64_t pos) const {
    return pos >= area_start() && pos < area_end() && (pos - area_start()) % kRecordAlign == 0;
  }

 private:
  uint64_t capacity_;
};

enum class EndReason : uint8_t {
  kEndOfLog,        // next header does not carry the expected LSN
  kNotValid,        // expected LSN but neither valid nor reclaimed
  kEpochRegression,  // record from an older (or impossible) epoch
  kBadLength,
  kCrcMismatch,     // intact header, damaged payload: repairable from a replica
  kBadSkip,
  kFull,            // walked the whole buffer
};

std::string_view EndReasonName(EndReason r);

struct RecordRef {
  uint64_t lsn = 0;
  uint64_t offset = 0;      // header position
  uint64_t slot_start = 0;  // start of the bytes this record made dirty (skip marker if wrapped)
  uint32_t length = 0;
  uint8_t flags = 0;
  uint32_t epoch = 0;

  bool reclaimed() const { return (flags & kFlagReclaimed) != 0; }
  uint64_t end() const { return offset + RecordFootprint(length); }
};

struct ScanResult {
  Superline superline;
  std::vector<RecordRef> records;  // includes reclaimed ones
  uint64_t tail_offset = kRecordAreaStart;  // normalized
  uint64_t next_lsn = 1;
  EndReason end = EndReason::kEndOfLog;
  uint32_t max_record_epoch = 0;

  uint64_t activity_epoch() const;
};

// Byte ranges holding the records in [head, tail), split at the buffer end.
std::vector<ByteRange> LiveRanges(const Geometry& g, uint64_t head, uint64_t tail);

// Reads the newer valid superline copy of `image`.
//   kBadMagic        both copies fail and the superline area is all zero
//   kUnrecoverable   both copies fail otherwise
//   kCorruption      a valid copy with wrong magic / impossible head
Result<Superline> ReadSuperline(ByteView image, int* chosen_copy = nullptr);

// Walks the record chain from the superline's head.
ScanResult ScanRecords(ByteView image, const Superline& sl);

// ReadSuperline + ScanRecords.
Result<ScanResult> ScanImage(ByteView image);

}  // namespace pmlog::log
