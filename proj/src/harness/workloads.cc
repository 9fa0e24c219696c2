#include "pmlog/harness/workloads.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "pmlog/harness/crashtest.h"
#include "pmlog/harness/fiber.h"
#include "pmlog/log/log.h"
#include "pmlog/replication/replica_set.h"

namespace pmlog::harness {

namespace {

std::unique_ptr<replication::ReplicaSet> LocalSet(pmem::PersistenceRegion* r, const log::LogConfig& cfg) {
  return std::make_unique<replication::ReplicaSet>(log::Mode::kLocal, 1, cfg.flush_order, cfg.capacity, r,
                                                   std::vector<std::unique_ptr<transport::Endpoint>>{});
}

// Cleans the caller's durable records once it holds enough of them.
void ReclaimForced(log::Log& log, std::vector<log::ReservationId>& mine, size_t batch) {
  if (mine.size() < batch) return;
  std::vector<log::ReservationId> keep;
  const uint64_t forced = log.last_forced_lsn();
  for (auto& id : mine) {
    if (id.lsn > forced || !log.Cleanup(id).ok()) keep.push_back(id);
  }
  mine.swap(keep);
}

uint64_t Percentile(const std::vector<uint64_t>& sorted, double q) {
  if (sorted.empty()) return 0;
  size_t i = static_cast<size_t>(q * static_cast<double>(sorted.size() - 1));
  return sorted[i];
}

}  // namespace

WindowResult RunWindowDistribution(const WindowOptions& o) {
  WindowResult res;
  res.bound = o.frequency * o.threads;
  log::LogConfig cfg;
  cfg.capacity = o.capacity;
  cfg.policy = log::ForcePolicy::Frequency(o.frequency, o.threads);
  cfg.force_wait_ticks = 1000000;
  pmem::PersistenceRegion region(cfg.capacity);
  FiberScheduler sched(o.seed);
  log::LogHooks hooks;
  hooks.yield = [&] { sched.Yield(); };
  hooks.preempt = [&] { sched.Preempt(); };
  auto set = LocalSet(&region, cfg);
  auto created = log::Log::Create(*set, cfg, hooks);
  if (!created.ok()) {
    ++res.errors;
    return res;
  }
  log::Log& log = **created;
  Bytes payload(o.record_size, 0x5A);
  std::vector<uint64_t> samples;

  // Crash capture: the persistent image plus which LSNs had completed.
  struct Capture {
    pmem::CrashSnapshot snap;
    std::vector<uint64_t> completed_unforced;
  };
  std::vector<Capture> captures;
  std::set<uint64_t> completed;  // completed and not yet known forced
  std::mt19937_64 rng(MixSeed(o.seed ^ 0x77));
  const uint64_t expected_switches = o.threads * o.ops_per_writer * 4 + 1;
  const uint64_t gap = o.crashes ? std::max<uint64_t>(1, expected_switches / o.crashes) : 0;
  uint64_t next_crash = gap ? 1 + rng() % (2 * gap) : 0;
  uint64_t switches = 0;

  sched.SetSwitchObserver([&] {
    uint64_t done = log.max_completed_lsn(), forced = log.last_forced_lsn();
    samples.push_back(done > forced ? done - forced : 0);
    completed.erase(completed.begin(), completed.upper_bound(forced));
    if (gap && ++switches == next_crash && captures.size() < o.crashes) {
      captures.push_back({region.Snapshot(), {completed.begin(), completed.end()}});
      next_crash += 1 + rng() % (2 * gap);
    }
  });
  for (uint32_t t = 0; t < o.threads; ++t) {
    sched.Spawn([&] {
      std::vector<log::ReservationId> mine;
      for (uint64_t i = 0; i < o.ops_per_writer; ++i) {
        auto id = log.Reserve(payload.size());
        if (!id.ok()) {
          if (id.status().code() != StatusCode::kLogFull) {
            ++res.errors;
            return;
          }
          ReclaimForced(log, mine, 0);
          sched.Yield();
          --i;
          continue;
        }
        if (!log.Copy(*id, payload).ok() || !log.Complete(*id).ok()) {
          ++res.errors;
          return;
        }
        completed.insert(id->lsn);
        if (!log.Force(*id, o.frequency).ok()) {
          ++res.errors;
          return;
        }
        mine.push_back(*id);
        ReclaimForced(log, mine, 64);
      }
    });
  }
  sched.Run();
  std::sort(samples.begin(), samples.end());
  res.samples = samples.size();
  double sum = 0;
  uint64_t small = 0;
  for (uint64_t s : samples) {
    ++res.histogram[s];
    sum += static_cast<double>(s);
    if (2 * s < res.bound) ++small;
  }
  if (!samples.empty()) {
    res.max = samples.back();
    res.mean = sum / static_cast<double>(samples.size());
    res.p50 = Percentile(samples, 0.5);
    res.p99 = Percentile(samples, 0.99);
    res.below_half = static_cast<double>(small) / static_cast<double>(samples.size());
  }

  log::LogConfig plain = cfg;
  for (auto& c : captures) {
    ++res.crashes;
    auto crashed = c.snap.Materialize(pmem::FaultPlan::Random(rng()));
    auto cset = LocalSet(&crashed, plain);
    auto reopened = log::Log::Open(*cset, plain);
    if (!reopened.ok()) {
      ++res.errors;
      continue;
    }
    const uint64_t tail = (*reopened)->next_lsn() - 1;
    uint64_t lost = 0;
    for (uint64_t lsn : c.completed_unforced) lost += lsn > tail ? 1 : 0;
    res.max_lost = std::max(res.max_lost, lost);
    if (lost > res.bound) ++res.lost_over_bound;
  }
  return res;
}

void WriteWindowCsv(std::ostream& os, const WindowResult& r) {
  os << "window,count\n";
  for (auto& [w, c] : r.histogram) os << w << ',' << c << '\n';
}

BenchResult RunBench(const BenchOptions& o) {
  BenchResult res;
  res.policy = o.policy.ToString();
  res.threads = o.threads;
  res.record_size = o.record_size;
  log::LogConfig cfg;
  cfg.capacity = o.capacity;
  cfg.policy = o.policy;
  pmem::PersistenceRegion region(cfg.capacity);
  region.SetPersistLatency(o.persist_line_ns, o.persist_fence_ns);
  auto set = LocalSet(&region, cfg);
  auto created = log::Log::Create(*set, cfg);
  if (!created.ok()) {
    ++res.violations;
    return res;
  }
  log::Log& log = **created;
  const uint64_t persists_before = region.event_count();

  std::atomic<bool> go{false}, stop{false};
  std::atomic<uint64_t> violations{0};
  std::vector<std::vector<uint64_t>> lat(o.threads);
  std::vector<std::thread> ts;
  for (uint32_t t = 0; t < o.threads; ++t) {
    ts.emplace_back([&, t] {
      Bytes payload(o.record_size);
      std::mt19937_64 rng(o.seed * 1000 + t);
      for (auto& b : payload) b = static_cast<uint8_t>(rng());
      std::vector<log::ReservationId> mine;
      auto& l = lat[t];
      l.reserve(1 << 18);
      while (!go.load(std::memory_order_acquire)) std::this_thread::yield();
      while (!stop.load(std::memory_order_relaxed)) {
        auto t0 = std::chrono::steady_clock::now();
        auto id = log.Append(payload);
        auto t1 = std::chrono::steady_clock::now();
        if (!id.ok()) {
          if (id.status().code() == StatusCode::kLogFull) {
            ReclaimForced(log, mine, 0);
            std::this_thread::yield();
            continue;
          }
          violations.fetch_add(1);
          return;
        }
        l.push_back(static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
        mine.push_back(*id);
        ReclaimForced(log, mine, 256);
      }
    });
  }
  auto start = std::chrono::steady_clock::now();
  go.store(true, std::memory_order_release);
  std::this_thread::sleep_for(std::chrono::milliseconds(o.duration_ms));
  stop.store(true);
  for (auto& t : ts) t.join();
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::vector<uint64_t> all;
  for (auto& l : lat) all.insert(all.end(), l.begin(), l.end());
  std::sort(all.begin(), all.end());
  res.ops = all.size();
  res.ops_per_sec = res.seconds > 0 ? static_cast<double>(res.ops) / res.seconds : 0;
  double sum = 0;
  for (uint64_t v : all) sum += static_cast<double>(v);
  if (!all.empty()) res.mean_us = sum / static_cast<double>(all.size()) / 1000.0;
  res.p50_us = static_cast<double>(Percentile(all, 0.5)) / 1000.0;
  res.p99_us = static_cast<double>(Percentile(all, 0.99)) / 1000.0;
  res.p999_us = static_cast<double>(Percentile(all, 0.999)) / 1000.0;
  res.persists = region.event_count() - persists_before;

  // Everything flushed must come back, in order.
  if (!log.Flush().ok()) violations.fetch_add(1);
  const uint64_t last = log.next_lsn() - 1;
  created->reset();
  region.SetPersistLatency(0, 0);
  region.CrashInPlace(pmem::FaultPlan::DropAll());
  auto set2 = LocalSet(&region, cfg);
  auto reopened = log::Log::Open(*set2, cfg);
  if (!reopened.ok()) {
    violations.fetch_add(1);
  } else {
    if ((*reopened)->next_lsn() - 1 != last) violations.fetch_add(1);
    auto it = (*reopened)->NewIterator();
    log::LogRecord r;
    uint64_t prev = 0;
    while (it.Next(&r)) {
      if (r.lsn <= prev || r.payload.size() != o.record_size) violations.fetch_add(1);
      prev = r.lsn;
    }
  }
  res.violations = violations.load();
  return res;
}

void WriteBenchCsvHeader(std::ostream& os) {
  os << "policy,threads,record_size,ops,seconds,ops_per_sec,mean_us,p50_us,p99_us,p999_us,events,violations\n";
}

void WriteBenchCsv(std::ostream& os, const BenchResult& r) {
  os << r.policy << ',' << r.threads << ',' << r.record_size << ',' << r.ops << ',' << r.seconds << ','
     << r.ops_per_sec << ',' << r.mean_us << ',' << r.p50_us << ',' << r.p99_us << ',' << r.p999_us << ','
     << r.persists << ',' << r.violations << '\n';
}

}  // namespace pmlog::harness
