#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "pmlog/bytes.h"
#include "pmlog/status.h"

namespace pmlog::transport {

enum class EndpointState { kConnected, kClosed, kFenced };

std::string_view EndpointStateName(EndpointState s);

using Ticket = uint64_t;

// Primary-side handle on one backup. A write_and_force is acknowledged only
// after the backup has made the bytes durable. Any timeout closes the
// connection for good; Reconnect() opens a new connection generation.
//
// Thread-safe. Requests on one endpoint are delivered and applied in issue
// order.
class Endpoint {
 public:
  virtual ~Endpoint() = default;

  virtual int replica_id() const = 0;
  virtual std::string address() const = 0;
  virtual EndpointState state() const = 0;

  // Issues the request without waiting; Await() collects the ack.
  virtual Result<Ticket> BeginWriteAndForce(uint64_t dest_offset, ByteView payload) = 0;
  virtual Status Await(Ticket ticket) = 0;

  virtual Result<Bytes> RemoteRead(uint64_t offset, uint64_t length) = 0;
  // Announces the primary's epoch; the backup refuses anything older.
  virtual Status WriteEpoch(uint64_t epoch) = 0;

  virtual Status Reconnect() = 0;
  virtual void Close() = 0;

  Status WriteAndForce(uint64_t dest_offset, ByteView payload) {
    auto t = BeginWriteAndForce(dest_offset, payload);
    if (!t.ok()) return t.status();
    return Await(*t);
  }
};

}  // namespace pmlog::transport
