#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pmlog/pmem/region.h"
#include "pmlog/transport/backup_service.h"
#include "pmlog/transport/endpoint.h"

namespace pmlog::transport {

inline constexpr std::chrono::milliseconds kDefaultSocketTimeout{1000};

// TCP backup: one thread per accepted connection, all sharing one
// BackupService.
class BackupServer {
 public:
  explicit BackupServer(pmem::PersistenceRegion* region);
  ~BackupServer();

  BackupServer(const BackupServer&) = delete;
  BackupServer& operator=(const BackupServer&) = delete;

  // Binds 127.0.0.1:port (0 picks a free port).
  Status Listen(uint16_t port = 0, const std::string& host = "127.0.0.1");
  uint16_t port() const { return port_; }

  // Accept loop on a background thread / on the calling thread.
  void Start();
  void Serve();
  void Stop();

  BackupService& service() { return service_; }

 private:
  void HandleConnection(int fd);

  BackupService service_;
  std::atomic<bool> stopping_{false};
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::thread accept_thread_;
  std::mutex conns_mu_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
};

class SocketEndpoint final : public Endpoint {
 public:
  SocketEndpoint(std::string host, uint16_t port, int replica_id,
                 std::chrono::milliseconds timeout = kDefaultSocketTimeout);
  ~SocketEndpoint() override;

  int replica_id() const override { return replica_id_; }
  std::string address() const override { return host_ + ":" + std::to_string(port_); }
  EndpointState state() const override { return state_.load(); }

  Result<Ticket> BeginWriteAndForce(uint64_t dest_offset, ByteView payload) override;
  Status Await(Ticket ticket) override;
  Result<Bytes> RemoteRead(uint64_t offset, uint64_t length) override;
  Status WriteEpoch(uint64_t epoch) override;
  Status Reconnect() override;
  void Close() override;

 private:
  struct Pending {
    std::chrono::steady_clock::time_point deadline;
    bool done = false;
    Frame reply;
  };

  Result<Ticket> Send(const Frame& f);
  Result<Frame> Wait(Ticket t);
  void CloseLocked(EndpointState next);

  std::string host_;
  uint16_t port_;
  int replica_id_;
  std::chrono::milliseconds timeout_;
  std::atomic<EndpointState> state_{EndpointState::kClosed};

  std::mutex send_mu_;  // frame writes; ordered before recv_mu_
  std::mutex recv_mu_;  // response reads, pending_
  int fd_ = -1;
  Ticket next_ticket_ = 0;
  Ticket next_reply_ = 0;  // replies arrive in issue order
  std::map<Ticket, Pending> pending_;
};

}  // namespace pmlog::transport
