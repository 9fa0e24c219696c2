#include "pmlog/log/layout.h"

#include <algorithm>

#include "pmlog/kernels/crc32.h"

namespace pmlog::log {

Bytes Superline::Encode() const {
  Bytes b(kSuperlinePayload);
  EncodeFixed64(&b[0], magic);
  EncodeFixed64(&b[8], epoch);
  EncodeFixed64(&b[16], head_offset);
  EncodeFixed64(&b[24], start_lsn);
  EncodeFixed64(&b[32], update_epoch);
  EncodeFixed64(&b[40], seq);
  return b;
}

Superline Superline::Decode(ByteView p) {
  Superline s;
  s.magic = DecodeFixed64(&p[0]);
  s.epoch = DecodeFixed64(&p[8]);
  s.head_offset = DecodeFixed64(&p[16]);
  s.start_lsn = DecodeFixed64(&p[24]);
  s.update_epoch = DecodeFixed64(&p[32]);
  s.seq = DecodeFixed64(&p[40]);
  return s;
}

void EncodeSuperlineCopy(uint8_t* dst, const Superline& sl) {
  Bytes p = sl.Encode();
  std::copy(p.begin(), p.end(), dst);
  EncodeFixed32(dst + kSuperlinePayload, kernels::Crc32(p));
}

std::vector<ByteRange> LiveRanges(const Geometry& g, uint64_t head, uint64_t tail) {
  head = g.Normalize(head);
  tail = g.Normalize(tail);
  if (head == tail) return {};
  if (head < tail) return {{head, tail - head}};
  std::vector<ByteRange> out{{head, g.area_end() - head}};
  if (tail > g.area_start()) out.push_back({g.area_start(), tail - g.area_start()});
  return out;
}

int ChooseSuperline(ByteView copy0, ByteView copy1) {
  auto a = Superline::Decode(copy0), b = Superline::Decode(copy1);
  return a.seq >= b.seq ? 0 : 1;
}

void RecordHeader::EncodeTo(uint8_t* dst) const {
  std::fill(dst, dst + kRecordHeaderSize, 0);
  EncodeFixed64(dst, lsn);
  EncodeFixed32(dst + 8, length);
  EncodeFixed32(dst + 12, payload_crc);
  dst[16] = flags;
  EncodeFixed32(dst + 20, epoch);
}

RecordHeader RecordHeader::Decode(const uint8_t* src) {
  RecordHeader h;
  h.lsn = DecodeFixed64(src);
  h.length = DecodeFixed32(src + 8);
  h.payload_crc = DecodeFixed32(src + 12);
  h.flags = src[16];
  h.epoch = DecodeFixed32(src + 20);
  return h;
}

Status Geometry::Validate(uint64_t capacity) {
  if (capacity % 64 != 0) return Status::InvalidArgument("log capacity must be a multiple of 64");
  if (capacity < kRecordAreaStart + 256) return Status::InvalidArgument("log capacity too small");
  return Status::OK();
}

std::string_view EndReasonName(EndReason r) {
  switch (r) {
    case EndReason::kEndOfLog:
      return "end_of_log";
    case EndReason::kNotValid:
      return "not_valid";
    case EndReason::kEpochRegression:
      return "epoch_regression";
    case EndReason::kBadLength:
      return "bad_length";
    case EndReason::kCrcMismatch:
      return "crc_mismatch";
    case EndReason::kBadSkip:
      return "bad_skip";
    case EndReason::kFull:
      return "full";
  }
  return "?";
}

uint64_t ScanResult::activity_epoch() const {
  return std::max<uint64_t>(superline.update_epoch, max_record_epoch);
}

namespace {

bool CopyValid(ByteView image, size_t copy) {
  ByteView c = image.subspan(copy * kSuperlineCopySize, kSuperlinePayload + 4);
  return kernels::Crc32(c.first(kSuperlinePayload)) == DecodeFixed32(&c[kSuperlinePayload]);
}

}  // namespace

Result<Superline> ReadSuperline(ByteView image, int* chosen_copy) {
  if (image.size() < kRecordAreaStart) return Status::InvalidArgument("image smaller than superline pair");
  bool v0 = CopyValid(image, 0), v1 = CopyValid(image, 1);
  if (!v0 && !v1) {
    bool zero = std::all_of(image.begin(), image.begin() + kRecordAreaStart, [](uint8_t b) { return b == 0; });
    if (zero) return Status::BadMagic("no log superline (region never formatted)");
    return Status::Unrecoverable("both superline copies fail their checksum");
  }
  int which = v0 && v1 ? ChooseSuperline(image.subspan(0, kSuperlinePayload),
                                         image.subspan(kSuperlineCopySize, kSuperlinePayload))
                       : (v0 ? 0 : 1);
  auto sl = Superline::Decode(image.subspan(which * kSuperlineCopySize, kSuperlinePayload));
  if (sl.magic != kSuperlineMagic) return Status::BadMagic("superline magic mismatch");
  Geometry g(image.size());
  if (!g.InArea(sl.head_offset) || sl.start_lsn == 0 || sl.epoch == 0) {
    return Status::Corruption("superline fields out of range");
  }
  if (chosen_copy) *chosen_copy = which;
  return sl;
}

ScanResult ScanRecords(ByteView image, const Superline& sl) {
  Geometry g(image.size());
  ScanResult r;
  r.superline = sl;
  uint64_t pos = g.Normalize(sl.head_offset);
  uint64_t expected = sl.start_lsn;
  uint32_t prev_epoch = 0;
  const auto sl_epoch = static_cast<uint32_t>(sl.epoch);
  uint64_t consumed = 0;  // bytes walked, including skip gaps
  uint64_t slot_start = pos;
  bool after_skip = false;

  for (;;) {
    pos = g.Normalize(pos);
    if (consumed + kRecordAlign > g.area_size()) {
      r.end = EndReason::kFull;
      break;
    }
    auto h = RecordHeader::Decode(&image[pos]);
    if (h.lsn != expected) {
      r.end = EndReason::kEndOfLog;
      break;
    }
    if (h.epoch < prev_epoch || h.epoch > sl_epoch) {
      r.end = EndReason::kEpochRegression;
      break;
    }
    if (h.flags & kFlagSkip) {
      if (after_skip || pos == g.area_start()) {
        r.end = EndReason::kBadSkip;
        break;
      }
      consumed += g.area_end() - pos;
      prev_epoch = h.epoch;
      slot_start = pos;
      pos = g.area_start();
      after_skip = true;
      continue;
    }
    if (!(h.flags & (kFlagValid | kFlagReclaimed))) {
      r.end = EndReason::kNotValid;
      break;
    }
    uint64_t fp = RecordFootprint(h.length);
    if (h.length > g.max_record() || pos + fp > g.area_end() || consumed + fp + kRecordAlign > g.area_size()) {
      r.end = EndReason::kBadLength;
      break;
    }
    ByteView payload = image.subspan(pos + kRecordHeaderSize, h.length);
    if (kernels::Crc32(payload) != h.payload_crc) {
      r.end = EndReason::kCrcMismatch;
      break;
    }
    RecordRef ref;
    ref.lsn = h.lsn;
    ref.offset = pos;
    ref.slot_start = after_skip ? slot_start : pos;
    ref.length = h.length;
    ref.flags = h.flags;
    ref.epoch = h.epoch;
    r.records.push_back(ref);
    r.max_record_epoch = std::max(r.max_record_epoch, h.epoch);
    prev_epoch = h.epoch;
    consumed += fp;
    pos += fp;
    ++expected;
    after_skip = false;
    slot_start = g.Normalize(pos);
  }
  // A skip marker without its record does not extend the log.
  r.tail_offset = after_skip ? slot_start : g.Normalize(pos);
  r.next_lsn = expected;
  return r;
}

Result<ScanResult> ScanImage(ByteView image) {
  auto sl = ReadSuperline(image);
  if (!sl.ok()) return sl.status();
  return ScanRecords(image, *sl);
}

}  // namespace pmlog::log
