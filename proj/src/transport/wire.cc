#include "pmlog/transport/wire.h"

namespace pmlog::transport {

Frame Frame::WriteAndForce(uint64_t offset, ByteView payload) {
  return Frame{FrameType::kWriteAndForce, offset, static_cast<uint32_t>(payload.size()), WireStatus::kOk,
               Bytes(payload.begin(), payload.end())};
}

Frame Frame::Ack(FrameType type, WireStatus status, uint64_t offset, uint32_t length) {
  return Frame{type, offset, length, status, {}};
}

Frame Frame::ReadReq(uint64_t offset, uint32_t length) {
  return Frame{FrameType::kReadReq, offset, length, WireStatus::kOk, {}};
}

Frame Frame::ReadResp(WireStatus status, Bytes data) {
  auto n = static_cast<uint32_t>(data.size());
  return Frame{FrameType::kReadResp, 0, n, status, std::move(data)};
}

bool IsKnownType(uint32_t type) { return type >= 1 && type <= 10; }

bool HasStatus(FrameType type) {
  switch (type) {
    case FrameType::kForceAck:
    case FrameType::kReadResp:
    case FrameType::kEpochAck:
    case FrameType::kHelloAck:
    case FrameType::kFenceAck:
      return true;
    default:
      return false;
  }
}

size_t BodySize(FrameType type, uint32_t length) {
  switch (type) {
    case FrameType::kWriteAndForce:
      return length;
    case FrameType::kReadResp:
      return 4 + size_t{length};
    default:
      return HasStatus(type) ? 4 : 0;
  }
}

Bytes Encode(const Frame& f) {
  Bytes out(kFrameHeaderSize + BodySize(f.type, f.length));
  EncodeFixed32(&out[0], static_cast<uint32_t>(f.type));
  EncodeFixed64(&out[4], f.offset);
  EncodeFixed32(&out[12], f.length);
  uint8_t* body = out.data() + kFrameHeaderSize;
  if (HasStatus(f.type)) {
    EncodeFixed32(body, static_cast<uint32_t>(f.status));
    body += 4;
  }
  if (f.type == FrameType::kWriteAndForce || f.type == FrameType::kReadResp) {
    std::copy(f.payload.begin(), f.payload.end(), body);
  }
  return out;
}

Result<Frame> DecodeHeader(ByteView header) {
  if (header.size() < kFrameHeaderSize) return Status::Corruption("short frame header");
  uint32_t type = DecodeFixed32(&header[0]);
  if (!IsKnownType(type)) return Status::Corruption("unknown frame type " + std::to_string(type));
  Frame f;
  f.type = static_cast<FrameType>(type);
  f.offset = DecodeFixed64(&header[4]);
  f.length = DecodeFixed32(&header[12]);
  if (BodySize(f.type, f.length) > kMaxFrameLength) return Status::Corruption("frame too large");
  return f;
}

Status DecodeBody(Frame& f, ByteView body) {
  if (body.size() != BodySize(f.type, f.length)) return Status::Corruption("frame body size mismatch");
  size_t pos = 0;
  if (HasStatus(f.type)) {
    uint32_t s = DecodeFixed32(&body[0]);
    if (s > static_cast<uint32_t>(WireStatus::kIo)) return Status::Corruption("unknown wire status");
    f.status = static_cast<WireStatus>(s);
    pos = 4;
  }
  if (f.type == FrameType::kWriteAndForce || f.type == FrameType::kReadResp) {
    f.payload.assign(body.begin() + pos, body.end());
  }
  return Status::OK();
}

Result<Frame> Decode(ByteView bytes) {
  auto f = DecodeHeader(bytes);
  if (!f.ok()) return f.status();
  PMLOG_RETURN_IF_ERROR(DecodeBody(*f, bytes.subspan(kFrameHeaderSize)));
  return f;
}

Status FromWire(WireStatus s) {
  switch (s) {
    case WireStatus::kOk:
      return Status::OK();
    case WireStatus::kFenced:
      return Status::Fenced("backup refused a stale connection");
    case WireStatus::kRange:
      return Status::OutOfRange("remote range outside backup region");
    case WireStatus::kStaleEpoch:
      return Status::StaleEpoch("backup has seen a newer epoch");
    case WireStatus::kIo:
      return Status::IoError("backup i/o failure");
  }
  return Status::Corruption("unknown wire status");
}

WireStatus ToWire(const Status& s) {
  switch (s.code()) {
    case StatusCode::kOk:
      return WireStatus::kOk;
    case StatusCode::kFenced:
      return WireStatus::kFenced;
    case StatusCode::kOutOfRange:
      return WireStatus::kRange;
    case StatusCode::kStaleEpoch:
      return WireStatus::kStaleEpoch;
    default:
      return WireStatus::kIo;
  }
}

}  // namespace pmlog::transport
