#include "pmlog/transport/backup_service.h"

#include "pmlog/transport/endpoint.h"

namespace pmlog::transport {

std::string_view EndpointStateName(EndpointState s) {
  switch (s) {
    case EndpointState::kConnected:
      return "connected";
    case EndpointState::kClosed:
      return "timed-out-closed";
    case EndpointState::kFenced:
      return "fenced";
  }
  return "?";
}

uint64_t BackupService::Hello() {
  std::unique_lock lock(mu_);
  opened_ = ++generation_;
  return opened_;
}

void BackupService::Fence() {
  std::unique_lock lock(mu_);
  ++generation_;
  opened_ = 0;
}

uint64_t BackupService::generation() const {
  std::shared_lock lock(mu_);
  return generation_;
}

uint64_t BackupService::accepted_epoch() const {
  std::shared_lock lock(mu_);
  return epoch_;
}

uint64_t BackupService::writes_applied() const { return writes_.load(); }

void BackupService::set_region(pmem::PersistenceRegion* region) {
  std::unique_lock lock(mu_);
  region_ = region;
}

Frame BackupService::Handle(uint64_t gen, const Frame& req) {
  std::shared_lock lock(mu_);
  const bool live = gen != 0 && gen == opened_;
  switch (req.type) {
    case FrameType::kWriteAndForce: {
      if (!live) return Frame::Ack(FrameType::kForceAck, WireStatus::kFenced, req.offset, req.length);
      // store + persist before acknowledging
      Status s = region_->Store(req.offset, req.payload);
      if (s.ok()) s = region_->Persist(req.offset, req.payload.size());
      if (s.ok()) writes_.fetch_add(1);
      return Frame::Ack(FrameType::kForceAck, ToWire(s), req.offset, req.length);
    }
    case FrameType::kReadReq: {
      if (!live) return Frame::ReadResp(WireStatus::kFenced, {});
      auto data = region_->Read(req.offset, req.length);
      if (!data.ok()) return Frame::ReadResp(ToWire(data.status()), {});
      return Frame::ReadResp(WireStatus::kOk, std::move(*data));
    }
    case FrameType::kEpochWrite: {
      if (!live) return Frame::Ack(FrameType::kEpochAck, WireStatus::kFenced);
      std::lock_guard g(epoch_mu_);
      if (req.offset < epoch_) return Frame::Ack(FrameType::kEpochAck, WireStatus::kStaleEpoch, epoch_);
      epoch_ = req.offset;
      return Frame::Ack(FrameType::kEpochAck, WireStatus::kOk, epoch_);
    }
    default:
      return Frame::Ack(FrameType::kForceAck, WireStatus::kIo);
  }
}

Frame BackupService::Dispatch(uint64_t* conn_gen, const Frame& req) {
  switch (req.type) {
    case FrameType::kHello:
      *conn_gen = Hello();
      return Frame::Ack(FrameType::kHelloAck, WireStatus::kOk, *conn_gen);
    case FrameType::kFence:
      Fence();
      *conn_gen = 0;
      return Frame::Ack(FrameType::kFenceAck, WireStatus::kOk);
    default:
      return Handle(*conn_gen, req);
  }
}

}  // namespace pmlog::transport
