#include "pmlog/primitives/atomic_cell.h"

#include <stdexcept>

#include "pmlog/kernels/crc32.h"

namespace pmlog::primitives {

namespace {
constexpr size_t kLine = pmem::kCacheLineSize;
size_t RoundUp(size_t n) { return (n + kLine - 1) / kLine * kLine; }
}  // namespace

AtomicCell::AtomicCell(pmem::PersistenceRegion& region, uint64_t base, uint32_t payload_size, IndexMode mode,
                       Chooser chooser)
    : region_(region), base_(base), size_(payload_size), mode_(mode), chooser_(std::move(chooser)) {
  if (payload_size == 0) throw std::invalid_argument("atomic cell payload must be non-empty");
}

size_t AtomicCell::BufferStride(uint32_t payload_size) { return RoundUp(payload_size + 4); }

size_t AtomicCell::Footprint(uint32_t payload_size, IndexMode mode) {
  return (mode == IndexMode::kPersistent ? kLine : 0) + 2 * BufferStride(payload_size);
}

uint64_t AtomicCell::buffer_offset(int which) const {
  uint64_t first = base_ + (mode_ == IndexMode::kPersistent ? kLine : 0);
  return first + static_cast<uint64_t>(which) * BufferStride(size_);
}

Status AtomicCell::StoreBuffer(int which, ByteView data) {
  uint8_t crc[4];
  EncodeFixed32(crc, kernels::Crc32(data));
  PMLOG_RETURN_IF_ERROR(region_.Store(buffer_offset(which), data));
  return region_.Store(buffer_offset(which) + size_, {crc, 4});
}

Status AtomicCell::Format(ByteView initial, PersistSink& sink) {
  if (initial.size() != size_) return Status::InvalidArgument("atomic cell value has wrong size");
  PMLOG_RETURN_IF_ERROR(StoreBuffer(0, initial));
  // buf[1]: zero payload with a deliberately wrong checksum.
  Bytes zero(size_, 0);
  uint8_t bad[4];
  EncodeFixed32(bad, ~kernels::Crc32(zero));
  PMLOG_RETURN_IF_ERROR(region_.Store(buffer_offset(1), zero));
  PMLOG_RETURN_IF_ERROR(region_.Store(buffer_offset(1) + size_, {bad, 4}));
  if (mode_ == IndexMode::kPersistent) {
    uint8_t idx[8] = {};
    PMLOG_RETURN_IF_ERROR(region_.Store(index_offset(), {idx, 8}));
  }
  index_ = 0;
  return sink.PersistRange(base_, footprint());
}

Result<Bytes> AtomicCell::ReadBuffer(int which) const {
  Bytes buf(size_ + 4);
  PMLOG_RETURN_IF_ERROR(region_.Read(buffer_offset(which), buf));
  uint32_t stored = DecodeFixed32(buf.data() + size_);
  buf.resize(size_);
  if (kernels::Crc32(buf) != stored) return Status::DataInvalid("atomic cell buffer checksum mismatch");
  return buf;
}

Status AtomicCell::Open() {
  auto b0 = ReadBuffer(0);
  auto b1 = ReadBuffer(1);
  if (!b0.ok() && !b1.ok()) return Status::Unrecoverable("both atomic cell buffers are corrupt");

  if (mode_ == IndexMode::kPersistent) {
    uint8_t idx[8];
    PMLOG_RETURN_IF_ERROR(region_.Read(index_offset(), {idx, 8}));
    uint64_t v = DecodeFixed64(idx);
    if (v > 1) return Status::Corruption("atomic cell index is neither 0 nor 1");
    index_ = static_cast<int>(v);
    return Status::OK();
  }

  if (b0.ok() && b1.ok()) {
    if (!chooser_) return Status::WrongState("two valid buffers and no chooser");
    index_ = chooser_(*b0, *b1) == 0 ? 0 : 1;
  } else {
    index_ = b0.ok() ? 0 : 1;
  }
  return Status::OK();
}

Status AtomicCell::AtomicWrite(ByteView data, PersistSink& sink) {
  if (data.size() != size_) return Status::InvalidArgument("atomic cell value has wrong size");
  int next = 1 - index_;
  PMLOG_RETURN_IF_ERROR(StoreBuffer(next, data));
  PMLOG_RETURN_IF_ERROR(sink.PersistRange(buffer_offset(next), size_ + 4));
  index_ = next;
  if (mode_ == IndexMode::kVolatile) return Status::OK();

  uint8_t idx[8];
  EncodeFixed64(idx, static_cast<uint64_t>(next));
  PMLOG_RETURN_IF_ERROR(region_.Store(index_offset(), {idx, 8}));
  return sink.PersistRange(index_offset(), 8);
}

Result<Bytes> AtomicCell::AtomicRead() const { return ReadBuffer(index_); }

}  // namespace pmlog::primitives
