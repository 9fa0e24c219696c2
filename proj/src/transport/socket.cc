#include "pmlog/transport/socket.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace pmlog::transport {

namespace {

using Clock = std::chrono::steady_clock;

Status Errno(const char* what) { return Status::IoError(std::string(what) + ": " + std::strerror(errno)); }

void SetNonBlocking(int fd) { fcntl(fd, F_SETFL, fcntl(fd, F_GETFL, 0) | O_NONBLOCK); }

// Milliseconds left until `deadline`, or -1 (forever) when unset.
int PollBudget(const std::optional<Clock::time_point>& deadline) {
  if (!deadline) return 200;
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(std::min<int64_t>(left, 200));
}

bool Expired(const std::optional<Clock::time_point>& deadline) { return deadline && Clock::now() >= *deadline; }

Status WaitFd(int fd, short events, const std::optional<Clock::time_point>& deadline,
              const std::atomic<bool>* stop) {
  for (;;) {
    if (stop && stop->load()) return Status::Closed("stopping");
    pollfd p{fd, events, 0};
    int rc = ::poll(&p, 1, PollBudget(deadline));
    if (rc < 0 && errno != EINTR) return Errno("poll");
    if (rc > 0) return Status::OK();
    if (Expired(deadline)) return Status::Timeout("socket timed out");
  }
}

Status SendAll(int fd, ByteView data, const std::optional<Clock::time_point>& deadline,
               const std::atomic<bool>* stop = nullptr) {
  size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n > 0) {
      off += static_cast<size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      PMLOG_RETURN_IF_ERROR(WaitFd(fd, POLLOUT, deadline, stop));
      continue;
    }
    return Errno("send");
  }
  return Status::OK();
}

Status RecvAll(int fd, uint8_t* out, size_t len, const std::optional<Clock::time_point>& deadline,
               const std::atomic<bool>* stop = nullptr) {
  size_t off = 0;
  while (off < len) {
    ssize_t n = ::recv(fd, out + off, len - off, 0);
    if (n > 0) {
      off += static_cast<size_t>(n);
      continue;
    }
    if (n == 0) return Status::Closed("peer closed connection");
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) {
      PMLOG_RETURN_IF_ERROR(WaitFd(fd, POLLIN, deadline, stop));
      continue;
    }
    return Errno("recv");
  }
  return Status::OK();
}

Result<Frame> RecvFrame(int fd, const std::optional<Clock::time_point>& deadline,
                        const std::atomic<bool>* stop = nullptr) {
  uint8_t header[kFrameHeaderSize];
  PMLOG_RETURN_IF_ERROR(RecvAll(fd, header, sizeof header, deadline, stop));
  auto f = DecodeHeader({header, sizeof header});
  if (!f.ok()) return f.status();
  Bytes body(BodySize(f->type, f->length));
  PMLOG_RETURN_IF_ERROR(RecvAll(fd, body.data(), body.size(), deadline, stop));
  PMLOG_RETURN_IF_ERROR(DecodeBody(*f, body));
  return f;
}

}  // namespace

// ---- server ----

BackupServer::BackupServer(pmem::PersistenceRegion* region) : service_(region) {}

BackupServer::~BackupServer() { Stop(); }

Status BackupServer::Listen(uint16_t port, const std::string& host) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) return Errno("socket");
  int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) return Status::InvalidArgument("bad listen address");
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) return Errno("bind");
  if (::listen(listen_fd_, 16) < 0) return Errno("listen");
  socklen_t len = sizeof addr;
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  SetNonBlocking(listen_fd_);
  return Status::OK();
}

void BackupServer::Start() {
  accept_thread_ = std::thread([this] { Serve(); });
}

void BackupServer::Serve() {
  while (!stopping_.load()) {
    if (!WaitFd(listen_fd_, POLLIN, std::nullopt, &stopping_).ok()) break;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    SetNonBlocking(fd);
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(conns_mu_);
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { HandleConnection(fd); });
  }
}

void BackupServer::HandleConnection(int fd) {
  uint64_t gen = 0;
  for (;;) {
    auto f = RecvFrame(fd, std::nullopt, &stopping_);
    if (!f.ok()) break;
    Frame reply = service_.Dispatch(&gen, *f);
    if (!SendAll(fd, Encode(reply), std::nullopt, &stopping_).ok()) break;
  }
  ::shutdown(fd, SHUT_RDWR);
}

void BackupServer::Stop() {
  stopping_.store(true);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conns_mu_);
    threads.swap(conn_threads_);
  }
  for (auto& t : threads) t.join();
  std::lock_guard lock(conns_mu_);
  for (int fd : conn_fds_) ::close(fd);
  conn_fds_.clear();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

// ---- client ----

SocketEndpoint::SocketEndpoint(std::string host, uint16_t port, int replica_id, std::chrono::milliseconds timeout)
    : host_(std::move(host)), port_(port), replica_id_(replica_id), timeout_(timeout) {}

SocketEndpoint::~SocketEndpoint() { Close(); }

void SocketEndpoint::CloseLocked(EndpointState next) {
  if (fd_ >= 0) {
    // abortive close: the backup discards whatever it has not read yet
    linger l{1, 0};
    setsockopt(fd_, SOL_SOCKET, SO_LINGER, &l, sizeof l);
    ::close(fd_);
    fd_ = -1;
  }
  pending_.clear();
  state_.store(next);
}

void SocketEndpoint::Close() {
  std::lock_guard s(send_mu_);
  std::lock_guard r(recv_mu_);
  if (fd_ >= 0 || state_.load() == EndpointState::kConnected) {
    CloseLocked(state_.load() == EndpointState::kFenced ? EndpointState::kFenced : EndpointState::kClosed);
  }
}

Status SocketEndpoint::Reconnect() {
  std::lock_guard s(send_mu_);
  std::lock_guard r(recv_mu_);
  CloseLocked(EndpointState::kClosed);
  next_ticket_ = next_reply_ = 0;

  auto deadline = Clock::now() + timeout_;
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return Errno("socket");
  SetNonBlocking(fd);
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    return Status::InvalidArgument("bad backup address " + host_);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 && errno != EINPROGRESS) {
    Status st = Errno("connect");
    ::close(fd);
    return st;
  }
  Status st = WaitFd(fd, POLLOUT, deadline, nullptr);
  int err = 0;
  socklen_t len = sizeof err;
  if (st.ok()) getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
  if (st.ok() && err != 0) st = Status::IoError(std::string("connect: ") + std::strerror(err));
  fd_ = fd;
  if (st.ok()) st = SendAll(fd_, Encode(Frame::Simple(FrameType::kHello)), deadline);
  Result<Frame> ack = st.ok() ? RecvFrame(fd_, deadline) : Result<Frame>(st);
  if (!ack.ok()) {
    CloseLocked(EndpointState::kClosed);
    return ack.status().code() == StatusCode::kTimeout ? ack.status() : Status::Timeout(ack.status().message());
  }
  if (ack->type != FrameType::kHelloAck || ack->status != WireStatus::kOk) {
    CloseLocked(EndpointState::kFenced);
    return Status::Fenced("backup refused the connection");
  }
  state_.store(EndpointState::kConnected);
  return Status::OK();
}

Result<Ticket> SocketEndpoint::Send(const Frame& f) {
  std::lock_guard s(send_mu_);
  auto st = state_.load();
  if (st == EndpointState::kFenced) return Status::Fenced("connection was fenced");
  if (st != EndpointState::kConnected || fd_ < 0) return Status::Closed("connection closed");
  Ticket t;
  auto deadline = Clock::now() + timeout_;
  {
    std::lock_guard r(recv_mu_);
    t = ++next_ticket_;
    pending_[t].deadline = deadline;
  }
  Status sent = SendAll(fd_, Encode(f), deadline);
  if (!sent.ok()) {
    std::lock_guard r(recv_mu_);
    CloseLocked(EndpointState::kClosed);
    return sent.code() == StatusCode::kTimeout ? sent : Status::Timeout(sent.message());
  }
  return t;
}

Result<Frame> SocketEndpoint::Wait(Ticket t) {
  std::unique_lock r(recv_mu_);
  for (;;) {
    auto it = pending_.find(t);
    if (it == pending_.end()) {
      if (state_.load() == EndpointState::kFenced) return Status::Fenced("connection was fenced");
      return Status::Closed("connection closed");
    }
    if (it->second.done) {
      Frame f = std::move(it->second.reply);
      pending_.erase(it);
      return f;
    }
    auto got = RecvFrame(fd_, it->second.deadline);
    if (!got.ok()) {
      r.unlock();
      {
        std::lock_guard s(send_mu_);
        std::lock_guard again(recv_mu_);
        if (state_.load() == EndpointState::kConnected) CloseLocked(EndpointState::kClosed);
      }
      return got.status().code() == StatusCode::kTimeout ? got.status() : Status::Timeout(got.status().message());
    }
    auto& slot = pending_[++next_reply_];
    slot.done = true;
    slot.reply = std::move(*got);
  }
}

Result<Ticket> SocketEndpoint::BeginWriteAndForce(uint64_t dest_offset, ByteView payload) {
  return Send(Frame::WriteAndForce(dest_offset, payload));
}

namespace {
Status CheckReply(const Frame& f, std::atomic<EndpointState>& state) {
  Status s = FromWire(f.status);
  if (s == StatusCode::kFenced || s == StatusCode::kStaleEpoch) state.store(EndpointState::kFenced);
  return s;
}
}  // namespace

Status SocketEndpoint::Await(Ticket ticket) {
  auto f = Wait(ticket);
  if (!f.ok()) return f.status();
  return CheckReply(*f, state_);
}

Result<Bytes> SocketEndpoint::RemoteRead(uint64_t offset, uint64_t length) {
  if (length > kMaxFrameLength) return Status::InvalidArgument("read too large");
  auto t = Send(Frame::ReadReq(offset, static_cast<uint32_t>(length)));
  if (!t.ok()) return t.status();
  auto f = Wait(*t);
  if (!f.ok()) return f.status();
  PMLOG_RETURN_IF_ERROR(CheckReply(*f, state_));
  return std::move(f->payload);
}

Status SocketEndpoint::WriteEpoch(uint64_t epoch) {
  auto t = Send(Frame::Simple(FrameType::kEpochWrite, epoch));
  if (!t.ok()) return t.status();
  auto f = Wait(*t);
  if (!f.ok()) return f.status();
  return CheckReply(*f, state_);
}

}  // namespace pmlog::transport
