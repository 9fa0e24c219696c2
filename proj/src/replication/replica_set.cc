#include "pmlog/replication/replica_set.h"

#include <algorithm>
#include <tuple>

#include "pmlog/kernels/line_diff.h"

namespace pmlog::replication {

using log::Mode;

Status QuorumConfig::Validate() const {
  if (n == 0 || w == 0 || w > n) return Status::InvalidArgument("need 1 <= W <= N");
  return Status::OK();
}

Result<uint32_t> DeriveReadQuorum(uint32_t n, uint32_t w) {
  PMLOG_RETURN_IF_ERROR((QuorumConfig{n, w}.Validate()));
  return n - w + 1;
}

ReplicaSet::ReplicaSet(Mode mode, uint32_t write_quorum, log::FlushOrder order, uint64_t capacity,
                       pmem::PersistenceRegion* local, std::vector<std::unique_ptr<transport::Endpoint>> backups)
    : mode_(mode), order_(order), capacity_(capacity), local_(local), backups_(std::move(backups)) {
  if (mode_ == Mode::kRemoteOnly) {
    local_ = nullptr;
    staging_ = std::make_unique<pmem::PersistenceRegion>(capacity_);
    working_ = staging_.get();
  } else {
    working_ = local_;
  }
  quorum_.n = static_cast<uint32_t>(backups_.size()) + (has_local() ? 1 : 0);
  quorum_.w = write_quorum;
}

ReplicaSet::~ReplicaSet() = default;

Result<std::unique_ptr<ReplicaSet>> ReplicaSet::Make(const log::LogConfig& config, pmem::PersistenceRegion* local,
                                                     std::vector<std::unique_ptr<transport::Endpoint>> backups) {
  PMLOG_RETURN_IF_ERROR(config.Validate());
  uint32_t n = static_cast<uint32_t>(backups.size()) + (config.mode == Mode::kRemoteOnly ? 0 : 1);
  if (n != config.replicas) return Status::InvalidArgument("replica count does not match endpoints");
  if (config.mode != Mode::kRemoteOnly) {
    if (local == nullptr) return Status::InvalidArgument("mode needs a local region");
    if (local->capacity() != config.capacity) return Status::InvalidArgument("local region capacity mismatch");
  }
  if (config.mode == Mode::kRemoteOnly && backups.empty()) return Status::InvalidArgument("no backups");
  return std::make_unique<ReplicaSet>(config.mode, config.write_quorum, config.flush_order, config.capacity, local,
                                      std::move(backups));
}

Status ReplicaSet::Connect() {
  for (auto& ep : backups_) {
    if (ep->state() != transport::EndpointState::kConnected) (void)ep->Reconnect();
  }
  return Status::OK();
}

Status ReplicaSet::PersistRanges(std::span<const ByteRange> ranges) {
  uint32_t acks = 0;
  bool local_ok = false;
  auto persist_local = [&] {
    if (!has_local()) return;
    local_ok = true;
    for (const auto& r : ranges) {
      if (!local_->Persist(r.offset, r.length).ok()) local_ok = false;
    }
  };

  // A backup that missed a force stays out until the next recovery, so only
  // currently connected endpoints are written.
  std::vector<std::vector<transport::Ticket>> tickets(backups_.size());
  std::vector<bool> issued(backups_.size(), false);
  auto issue = [&] {
    std::vector<Bytes> payloads;
    payloads.reserve(ranges.size());
    for (const auto& r : ranges) {
      auto b = working_->Read(r.offset, r.length);
      payloads.push_back(b.ok() ? std::move(b.value()) : Bytes{});
    }
    for (size_t i = 0; i < backups_.size(); ++i) {
      auto& ep = *backups_[i];
      if (ep.state() != transport::EndpointState::kConnected) continue;
      issued[i] = true;
      for (size_t k = 0; k < ranges.size(); ++k) {
        auto t = ep.BeginWriteAndForce(ranges[k].offset, payloads[k]);
        if (!t.ok()) {
          issued[i] = false;
          break;
        }
        tickets[i].push_back(*t);
      }
    }
  };
  auto await = [&] {
    for (size_t i = 0; i < backups_.size(); ++i) {
      bool ok = issued[i];
      for (auto t : tickets[i]) {
        if (!backups_[i]->Await(t).ok()) ok = false;
      }
      if (ok) ++acks;
    }
  };

  switch (order_) {
    case log::FlushOrder::kRemoteFirst:
      issue();
      await();
      persist_local();
      break;
    case log::FlushOrder::kLocalFirst:
      persist_local();
      issue();
      await();
      break;
    case log::FlushOrder::kParallel:
      issue();
      persist_local();
      await();
      break;
  }
  if (local_ok) ++acks;
  if (acks < quorum_.w) {
    forces_failed_.fetch_add(1);
    return Status::QuorumFailure("force acknowledged by " + std::to_string(acks) + " of " +
                                 std::to_string(quorum_.n) + " copies, need " + std::to_string(quorum_.w));
  }
  forces_ok_.fetch_add(1);
  return Status::OK();
}

Status ReplicaSet::WriteCopy(int which, uint64_t offset, ByteView data) {
  if (recovery_write_budget_) {
    if (*recovery_write_budget_ == 0) return Status::Crashed("recovery stopped by test hook");
    --*recovery_write_budget_;
  }
  if (which < 0) {
    PMLOG_RETURN_IF_ERROR(local_->Store(offset, data));
    return local_->Persist(offset, data.size());
  }
  return backups_[which]->WriteAndForce(offset, data);
}

namespace {

struct Candidate {
  int which = 0;  // -1 local
  Bytes image;
  bool readable = false;
  Status scan_status;
  log::ScanResult scan;
  int superline_copy = 0;
};

// Lines [a, b) runs of differing lines, superline lines held back.
std::vector<ByteRange> DiffRuns(ByteView have, ByteView want, std::vector<ByteRange>* superline) {
  std::vector<uint64_t> lines;
  kernels::FindDifferingLines(have, want, pmem::kCacheLineSize, &lines);
  std::vector<ByteRange> runs;
  const uint64_t sl_lines = log::kRecordAreaStart / pmem::kCacheLineSize;
  bool sl_dirty = false;
  for (uint64_t l : lines) {
    if (l < sl_lines) {
      sl_dirty = true;
      continue;
    }
    uint64_t off = l * pmem::kCacheLineSize;
    if (!runs.empty() && runs.back().end() == off) {
      runs.back().length += pmem::kCacheLineSize;
    } else {
      runs.push_back({off, pmem::kCacheLineSize});
    }
  }
  if (sl_dirty) superline->push_back({0, log::kRecordAreaStart});
  for (auto& r : runs) r.length = std::min<uint64_t>(r.length, want.size() - r.offset);
  return runs;
}

}  // namespace

Result<log::ScanResult> ReplicaSet::Recover() {
  report_ = RecoveryReport{};
  PMLOG_RETURN_IF_ERROR(Connect());

  std::vector<Candidate> copies;
  if (has_local()) {
    Candidate c;
    c.which = -1;
    auto v = local_->volatile_image();
    c.image.assign(v.begin(), v.end());
    c.readable = true;
    copies.push_back(std::move(c));
  }
  for (size_t i = 0; i < backups_.size(); ++i) {
    Candidate c;
    c.which = static_cast<int>(i);
    auto img = backups_[i]->RemoteRead(0, capacity_);
    if (img.ok() && img->size() == capacity_) {
      c.image = std::move(img.value());
      c.readable = true;
    }
    copies.push_back(std::move(c));
  }

  uint32_t r = quorum_.r();
  uint32_t bad_magic = 0;
  for (auto& c : copies) {
    if (!c.readable) continue;
    ++report_.readable;
    auto sl = log::ReadSuperline(c.image, &c.superline_copy);
    if (!sl.ok()) {
      c.scan_status = sl.status();
      if (sl.status() == StatusCode::kBadMagic) ++bad_magic;
      continue;
    }
    c.scan = log::ScanRecords(c.image, *sl);
    ++report_.valid;
  }
  if (report_.readable < r) {
    return Status::RecoveryFailure("read " + std::to_string(report_.readable) + " copies, read quorum is " +
                                   std::to_string(r));
  }
  if (report_.valid == 0) {
    if (bad_magic == report_.readable) return Status::BadMagic("no copy carries a log");
    return Status::Unrecoverable("no readable copy has an intact superline");
  }
  if (report_.valid < r) {
    return Status::RecoveryFailure("only " + std::to_string(report_.valid) + " intact copies, read quorum is " +
                                   std::to_string(r));
  }

  uint64_t max_epoch = 0;
  for (auto& c : copies) {
    if (c.readable && c.scan_status.ok()) max_epoch = std::max(max_epoch, c.scan.superline.epoch);
  }
  report_.max_epoch = max_epoch;

  // Among copies at the max epoch, the one that saw the latest activity and
  // holds the most records wins. Ties go to the earliest copy in set order.
  const Candidate* best = nullptr;
  auto key = [](const Candidate& c) {
    return std::make_tuple(c.scan.activity_epoch(), c.scan.next_lsn, c.scan.superline.start_lsn);
  };
  for (const auto& c : copies) {
    if (!c.readable || !c.scan_status.ok() || c.scan.superline.epoch != max_epoch) continue;
    if (best == nullptr || key(c) > key(*best)) best = &c;
  }
  report_.chosen = best->which;
  report_.chosen_end = best->scan.end;
  report_.chosen_next_lsn = best->scan.next_lsn;

  const uint64_t new_epoch = max_epoch + 1;
  report_.new_epoch = new_epoch;
  for (auto& ep : backups_) {
    if (ep->state() != transport::EndpointState::kConnected) continue;
    Status st = ep->WriteEpoch(new_epoch);
    if (st == StatusCode::kStaleEpoch || st == StatusCode::kFenced) {
      return Status::Fenced("a backup already accepted a newer epoch: " + st.message());
    }
  }

  // The final image: the winner with the header slot at its tail zeroed and
  // the bumped superline in the cell's spare copy.
  Bytes final_image = best->image;
  log::Superline sl = best->scan.superline;
  // A damaged payload at the tail is left for the iterator to report.
  if (best->scan.end != log::EndReason::kFull && best->scan.end != log::EndReason::kCrcMismatch) {
    std::fill_n(final_image.begin() + static_cast<ptrdiff_t>(best->scan.tail_offset), log::kRecordHeaderSize, 0);
  }
  sl.epoch = new_epoch;
  sl.seq += 1;
  log::EncodeSuperlineCopy(final_image.data() + log::kSuperlineCopySize * (1 - best->superline_copy), sl);

  std::vector<const Candidate*> order{best};
  for (const auto& c : copies) {
    if (&c != best) order.push_back(&c);
  }
  uint32_t written = 0;
  bool local_written = !has_local();
  for (const Candidate* c : order) {
    if (!c->readable) continue;
    std::vector<ByteRange> sl_ranges;
    auto runs = DiffRuns(c->image, final_image, &sl_ranges);
    const bool data_differs = !runs.empty();
    runs.insert(runs.end(), sl_ranges.begin(), sl_ranges.end());
    Status st;
    for (const auto& run : runs) {
      st = WriteCopy(c->which, run.offset, ByteView(final_image).subspan(run.offset, run.length));
      if (!st.ok()) break;
    }
    if (st == StatusCode::kCrashed) return st;
    if (!st.ok()) continue;
    ++written;
    if (c->which < 0) local_written = true;
    if (data_differs && c != best) report_.repaired.push_back(c->which);
  }
  report_.epoch_writes = written;
  if (written < quorum_.w || !local_written) {
    return Status::RecoveryFailure("epoch reached " + std::to_string(written) + " copies, write quorum is " +
                                   std::to_string(quorum_.w));
  }
  if (mode_ == Mode::kRemoteOnly) PMLOG_RETURN_IF_ERROR(staging_->Store(0, final_image));
  return log::ScanRecords(final_image, sl);
}

}  // namespace pmlog::replication
