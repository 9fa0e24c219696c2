#include "pmlog/transport/sim_network.h"

#include <stdexcept>

namespace pmlog::transport {

class SimEndpoint final : public Endpoint {
 public:
  SimEndpoint(SimNetwork* net, int from, int to, int replica_id, uint64_t timeout)
      : net_(net), from_(from), to_(to), replica_id_(replica_id), timeout_(timeout) {}

  ~SimEndpoint() override { Close(); }

  int replica_id() const override { return replica_id_; }
  std::string address() const override { return "sim:" + std::to_string(to_); }

  EndpointState state() const override {
    std::lock_guard lock(net_->mu_);
    if (conn_ < 0) return EndpointState::kClosed;
    const auto& c = net_->conns_[conn_];
    if (c.fenced) return EndpointState::kFenced;
    return c.open ? EndpointState::kConnected : EndpointState::kClosed;
  }

  Result<Ticket> BeginWriteAndForce(uint64_t dest_offset, ByteView payload) override {
    std::lock_guard lock(net_->mu_);
    PMLOG_RETURN_IF_ERROR(UsableLocked());
    return net_->SendLocked(conn_, Frame::WriteAndForce(dest_offset, payload), timeout_);
  }

  Status Await(Ticket ticket) override {
    std::unique_lock lock(net_->mu_);
    if (conn_ < 0) return Status::Closed("endpoint never connected");
    SimNetwork::Reply r;
    return net_->AwaitLocked(lock, conn_, ticket, &r);
  }

  Result<Bytes> RemoteRead(uint64_t offset, uint64_t length) override {
    if (length > kMaxFrameLength) return Status::InvalidArgument("read too large");
    std::unique_lock lock(net_->mu_);
    PMLOG_RETURN_IF_ERROR(UsableLocked());
    Ticket t = net_->SendLocked(conn_, Frame::ReadReq(offset, static_cast<uint32_t>(length)), timeout_);
    SimNetwork::Reply r;
    PMLOG_RETURN_IF_ERROR(net_->AwaitLocked(lock, conn_, t, &r));
    return std::move(r.data);
  }

  Status WriteEpoch(uint64_t epoch) override {
    std::unique_lock lock(net_->mu_);
    PMLOG_RETURN_IF_ERROR(UsableLocked());
    Ticket t = net_->SendLocked(conn_, Frame::Simple(FrameType::kEpochWrite, epoch), timeout_);
    SimNetwork::Reply r;
    return net_->AwaitLocked(lock, conn_, t, &r);
  }

  Status Reconnect() override {
    std::unique_lock lock(net_->mu_);
    if (conn_ >= 0) net_->CloseConnLocked(conn_);
    conn_ = net_->OpenConnLocked(from_, to_);
    Ticket t = net_->SendLocked(conn_, Frame::Simple(FrameType::kHello), timeout_);
    SimNetwork::Reply r;
    return net_->AwaitLocked(lock, conn_, t, &r);
  }

  void Close() override {
    std::lock_guard lock(net_->mu_);
    if (conn_ >= 0) net_->CloseConnLocked(conn_);
  }

 private:
  Status UsableLocked() const {
    if (conn_ < 0) return Status::Closed("endpoint never connected");
    const auto& c = net_->conns_[conn_];
    if (c.fenced) return Status::Fenced("connection was fenced");
    if (!c.open) return Status::Closed("connection closed after timeout");
    return Status::OK();
  }

  SimNetwork* net_;
  int from_, to_, replica_id_;
  uint64_t timeout_;
  int conn_ = -1;
};

SimNetwork::SimNetwork(NetworkConditions conditions) { SetConditions(std::move(conditions)); }

SimNetwork::~SimNetwork() = default;

int SimNetwork::AddClient() {
  std::lock_guard lock(mu_);
  nodes_.push_back(Node{});
  return static_cast<int>(nodes_.size()) - 1;
}

int SimNetwork::AddBackup(pmem::PersistenceRegion* region) {
  std::lock_guard lock(mu_);
  Node n;
  n.service = std::make_unique<BackupService>(region);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

std::unique_ptr<Endpoint> SimNetwork::Connect(int from, int to, int replica_id, uint64_t timeout_ticks) {
  {
    std::lock_guard lock(mu_);
    if (to < 0 || to >= static_cast<int>(nodes_.size()) || !nodes_[to].service) {
      throw std::invalid_argument("connect target is not a backup node");
    }
  }
  return std::make_unique<SimEndpoint>(this, from, to, replica_id, timeout_ticks);
}

void SimNetwork::SetConditions(NetworkConditions conditions) {
  std::lock_guard lock(mu_);
  if (conditions.latency_max < conditions.latency_min) conditions.latency_max = conditions.latency_min;
  cond_ = std::move(conditions);
  rng_.seed(cond_.seed);
  partitions_.clear();
  for (auto [a, b] : cond_.partitions) partitions_.insert({std::min(a, b), std::max(a, b)});
}

void SimNetwork::Partition(int a, int b) {
  std::lock_guard lock(mu_);
  partitions_.insert({std::min(a, b), std::max(a, b)});
}

void SimNetwork::Heal(int a, int b) {
  std::lock_guard lock(mu_);
  partitions_.erase({std::min(a, b), std::max(a, b)});
}

void SimNetwork::HealAll() {
  std::lock_guard lock(mu_);
  partitions_.clear();
}

bool SimNetwork::Partitioned(int a, int b) const {
  std::lock_guard lock(mu_);
  return LinkDownLocked(a, b);
}

bool SimNetwork::LinkDownLocked(int a, int b) const {
  return partitions_.count({std::min(a, b), std::max(a, b)}) > 0;
}

void SimNetwork::SetNodeUp(int node, bool up) {
  std::lock_guard lock(mu_);
  nodes_.at(node).up = up;
  if (!up) {
    for (auto& c : conns_) {
      if (c.to == node || c.from == node) c.severed = true;
    }
  }
}

bool SimNetwork::node_up(int node) const {
  std::lock_guard lock(mu_);
  return nodes_.at(node).up;
}

void SimNetwork::FenceBackup(int node) {
  std::lock_guard lock(mu_);
  nodes_.at(node).service->Fence();
}

BackupService& SimNetwork::backup(int node) {
  std::lock_guard lock(mu_);
  return *nodes_.at(node).service;
}

pmem::PersistenceRegion* SimNetwork::backup_region(int node) {
  std::lock_guard lock(mu_);
  return nodes_.at(node).service->region();
}

void SimNetwork::ReplaceBackupRegion(int node, pmem::PersistenceRegion* region) {
  std::lock_guard lock(mu_);
  nodes_.at(node).service->set_region(region);
}

uint64_t SimNetwork::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

uint64_t SimNetwork::delivered() const {
  std::lock_guard lock(mu_);
  return delivered_;
}

uint64_t SimNetwork::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

void SimNetwork::SetDeliveryHook(std::function<void(int, const Frame&)> hook) {
  std::lock_guard lock(mu_);
  hook_ = std::move(hook);
}

void SimNetwork::RunUntil(uint64_t t) {
  std::lock_guard lock(mu_);
  while (!queue_.empty() && queue_.top().at <= t) StepLocked();
  now_ = std::max(now_, t);
}

void SimNetwork::RunUntilIdle() {
  std::lock_guard lock(mu_);
  while (StepLocked()) {
  }
}

uint64_t SimNetwork::LatencyLocked() {
  if (cond_.latency_max == cond_.latency_min) return cond_.latency_min;
  std::uniform_int_distribution<uint64_t> d(cond_.latency_min, cond_.latency_max);
  return d(rng_);
}

int SimNetwork::OpenConnLocked(int from, int to) {
  Conn c;
  c.from = from;
  c.to = to;
  c.open = true;
  conns_.push_back(std::move(c));
  return static_cast<int>(conns_.size()) - 1;
}

void SimNetwork::CloseConnLocked(int conn) {
  auto& c = conns_[conn];
  c.open = false;
  c.replies.clear();
  c.deadlines.clear();
}

Ticket SimNetwork::SendLocked(int conn, const Frame& f, uint64_t timeout) {
  auto& c = conns_[conn];
  Ticket t = ++next_ticket_;
  c.deadlines[t] = now_ + timeout;
  Msg m;
  m.at = std::max(now_ + LatencyLocked(), c.last_up);
  c.last_up = m.at;
  m.seq = ++seq_;
  m.conn = conn;
  m.to_backup = true;
  m.ticket = t;
  m.bytes = Encode(f);
  queue_.push(std::move(m));
  return t;
}

bool SimNetwork::StepLocked() {
  if (queue_.empty()) return false;
  Msg m = queue_.top();
  queue_.pop();
  now_ = std::max(now_, m.at);
  DeliverLocked(std::move(m));
  return true;
}

void SimNetwork::DeliverLocked(Msg m) {
  auto& c = conns_[m.conn];
  bool lost = !c.open || LinkDownLocked(c.from, c.to);
  if (!lost && cond_.drop_probability > 0) {
    std::bernoulli_distribution drop(cond_.drop_probability);
    lost = drop(rng_);
  }
  if (m.to_backup && (!nodes_[c.to].up || c.severed)) lost = true;
  if (lost) {
    ++dropped_;
    return;
  }
  ++delivered_;
  auto f = Decode(m.bytes);
  if (!f.ok()) return;  // frames are produced locally; cannot happen

  if (m.to_backup) {
    Frame reply = nodes_[c.to].service->Dispatch(&c.gen, *f);
    if (hook_) hook_(c.to, *f);
    Msg r;
    r.at = std::max(now_ + LatencyLocked(), c.last_down);
    c.last_down = r.at;
    r.seq = ++seq_;
    r.conn = m.conn;
    r.to_backup = false;
    r.ticket = m.ticket;
    r.bytes = Encode(reply);
    queue_.push(std::move(r));
    return;
  }

  Reply r;
  r.status = FromWire(f->status);
  r.data = std::move(f->payload);
  r.value = f->offset;
  if (r.status == StatusCode::kFenced || r.status == StatusCode::kStaleEpoch) {
    c.fenced = true;
    c.open = false;
  }
  c.replies[m.ticket] = std::move(r);
}

Status SimNetwork::AwaitLocked(std::unique_lock<std::mutex>&, int conn, Ticket t, Reply* out) {
  for (;;) {
    auto& c = conns_[conn];
    if (auto it = c.replies.find(t); it != c.replies.end()) {
      *out = std::move(it->second);
      c.replies.erase(it);
      c.deadlines.erase(t);
      return out->status;
    }
    if (c.fenced) return Status::Fenced("connection was fenced");
    if (!c.open) return Status::Closed("connection closed");
    auto d = c.deadlines.find(t);
    if (d == c.deadlines.end()) return Status::InvalidArgument("unknown ticket");
    uint64_t deadline = d->second;
    if (!queue_.empty() && queue_.top().at <= deadline) {
      StepLocked();
      continue;
    }
    now_ = std::max(now_, deadline);
    CloseConnLocked(conn);
    return Status::Timeout("no acknowledgement within " + std::to_string(deadline) + " ticks");
  }
}

}  // namespace pmlog::transport
