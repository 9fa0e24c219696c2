#include "pmlog/primitives/integrity_slot.h"

#include "pmlog/kernels/crc32.h"

namespace pmlog::primitives {

uint32_t IntegritySlot::HeaderCheckFor(const uint8_t* header8) const {
  if (mode_ == HeaderCheck::kExpectedValue) return expected_;
  return kernels::Crc32(ByteView{header8, 8});
}

Status IntegritySlot::ReliableWrite(ByteView data, PersistSink& sink, uint32_t meta) {
  if (data.size() > capacity_) return Status::InvalidArgument("payload exceeds slot capacity");
  uint8_t header[kHeaderSize];
  EncodeFixed32(header, static_cast<uint32_t>(data.size()));
  EncodeFixed32(header + 4, meta);
  EncodeFixed32(header + 8, HeaderCheckFor(header));
  uint8_t trailer[kTrailerSize];
  EncodeFixed32(trailer, kernels::Crc32(data));

  // Three independent stores, then a single persist for all of them.
  PMLOG_RETURN_IF_ERROR(region_.Store(base_, {header, kHeaderSize}));
  PMLOG_RETURN_IF_ERROR(region_.Store(base_ + kHeaderSize, data));
  PMLOG_RETURN_IF_ERROR(region_.Store(base_ + kHeaderSize + data.size(), {trailer, kTrailerSize}));
  return sink.PersistRange(base_, kHeaderSize + data.size() + kTrailerSize);
}

Result<Bytes> IntegritySlot::ReliableRead(uint32_t* meta) const {
  uint8_t header[kHeaderSize];
  PMLOG_RETURN_IF_ERROR(region_.Read(base_, {header, kHeaderSize}));
  if (DecodeFixed32(header + 8) != HeaderCheckFor(header)) return Status::HeaderInvalid("header check mismatch");
  uint32_t size = DecodeFixed32(header);
  if (size > capacity_) return Status::HeaderInvalid("size exceeds slot capacity");

  Bytes buf(size + kTrailerSize);
  PMLOG_RETURN_IF_ERROR(region_.Read(base_ + kHeaderSize, buf));
  uint32_t stored = DecodeFixed32(buf.data() + size);
  buf.resize(size);
  if (kernels::Crc32(buf) != stored) return Status::DataInvalid("payload checksum mismatch");
  if (meta) *meta = DecodeFixed32(header + 4);
  return buf;
}

}  // namespace pmlog::primitives
