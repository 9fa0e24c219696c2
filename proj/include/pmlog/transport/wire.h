#pragma once

#include <cstdint>
#include <optional>

#include "pmlog/bytes.h"
#include "pmlog/status.h"

namespace pmlog::transport {

// Frame on the wire, little-endian:
//   u32 type | u64 offset | u32 length | body
// The body length depends on the type (see BodySize).
enum class FrameType : uint32_t {
  kWriteAndForce = 1,  // offset=dest, length=payload bytes, body=payload
  kForceAck = 2,       // offset/length echoed, body=u32 status
  kReadReq = 3,        // offset, length requested
  kReadResp = 4,       // length=data bytes, body=u32 status + data
  kEpochWrite = 5,     // offset=epoch
  kEpochAck = 6,       // body=u32 status
  kHello = 7,          // opens a connection generation
  kHelloAck = 8,       // offset=assigned generation, body=u32 status
  kFence = 9,          // deposes every open connection
  kFenceAck = 10,      // body=u32 status
};

enum class WireStatus : uint32_t { kOk = 0, kFenced = 1, kRange = 2, kStaleEpoch = 3, kIo = 4 };

inline constexpr size_t kFrameHeaderSize = 16;
inline constexpr uint32_t kMaxFrameLength = 1u << 30;

struct Frame {
  FrameType type = FrameType::kHello;
  uint64_t offset = 0;
  uint32_t length = 0;
  WireStatus status = WireStatus::kOk;  // ack/response types only
  Bytes payload;                        // WriteAndForce payload or ReadResp data

  static Frame WriteAndForce(uint64_t offset, ByteView payload);
  static Frame Ack(FrameType type, WireStatus status, uint64_t offset = 0, uint32_t length = 0);
  static Frame ReadReq(uint64_t offset, uint32_t length);
  static Frame ReadResp(WireStatus status, Bytes data);
  static Frame Simple(FrameType type, uint64_t offset = 0) { return Frame{type, offset, 0, WireStatus::kOk, {}}; }
};

bool IsKnownType(uint32_t type);
bool HasStatus(FrameType type);

// Body bytes that follow a header with this type/length.
size_t BodySize(FrameType type, uint32_t length);

Bytes Encode(const Frame& f);

// Parses the 16-byte header; the body is appended with DecodeBody.
Result<Frame> DecodeHeader(ByteView header);
Status DecodeBody(Frame& f, ByteView body);

// Whole-buffer decode (header + body, no trailing bytes).
Result<Frame> Decode(ByteView bytes);

Status FromWire(WireStatus s);
WireStatus ToWire(const Status& s);

}  // namespace pmlog::transport
