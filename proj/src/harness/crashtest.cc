#include "pmlog/harness/crashtest.h"

#include <map>
#include <random>
#include <set>

#include "pmlog/harness/fiber.h"
#include "pmlog/log/log.h"
#include "pmlog/replication/replica_set.h"

namespace pmlog::harness {

namespace {

using log::ForcePolicy;
using log::ForceResult;
using log::Log;
using pmem::PersistenceRegion;

std::unique_ptr<replication::ReplicaSet> LocalSet(PersistenceRegion* r, const log::LogConfig& cfg) {
  return std::make_unique<replication::ReplicaSet>(log::Mode::kLocal, 1, cfg.flush_order, cfg.capacity, r,
                                                   std::vector<std::unique_ptr<transport::Endpoint>>{});
}

Bytes Payload(uint64_t size, uint64_t key) {
  Bytes b(size);
  std::mt19937_64 rng(key);
  for (auto& x : b) x = static_cast<uint8_t>(rng());
  return b;
}

struct TrialPlan {
  uint32_t writers = 1;
  ForcePolicy policy;
  log::LogConfig config;
  uint64_t fiber_seed = 0;
  uint64_t survive_seed = 0;
  std::vector<std::vector<uint64_t>> sizes;  // per writer, per op
  std::vector<std::vector<uint8_t>> chunks;  // copy chunks per op
};

TrialPlan MakePlan(const CrashTestOptions& o, uint64_t seed) {
  std::mt19937_64 rng(MixSeed(seed));
  TrialPlan p;
  p.writers = 1 + static_cast<uint32_t>(rng() % o.max_writers);
  if (o.frequency) {
    p.policy = ForcePolicy::Frequency(*o.frequency, p.writers);
  } else if (rng() % 2 == 0) {
    p.policy = ForcePolicy::Sync();
  } else {
    p.policy = ForcePolicy::Frequency(uint64_t{2} << (rng() % 4), p.writers);
  }
  p.config.capacity = o.capacity;
  p.config.policy = p.policy;
  p.config.force_wait_ticks = 200000;
  p.config.debug_skip_payload_crc = o.skip_payload_crc;
  p.fiber_seed = rng();
  p.survive_seed = rng();
  std::uniform_int_distribution<uint64_t> size(o.min_record, o.max_record);
  for (uint32_t w = 0; w < p.writers; ++w) {
    p.sizes.emplace_back();
    p.chunks.emplace_back();
    for (uint32_t i = 0; i < o.ops_per_writer; ++i) {
      p.sizes.back().push_back(size(rng));
      p.chunks.back().push_back(static_cast<uint8_t>(1 + rng() % 3));
    }
  }
  return p;
}

struct RunState {
  std::map<uint64_t, Bytes> payloads;  // by LSN, registered at reserve time
  std::set<uint64_t> cleaned;
  uint64_t max_forced = 0;
  bool stop = false;
  // Frozen at the crash point.
  uint64_t crash_max_forced = 0;
  std::set<uint64_t> crash_cleaned;
  std::string error;
};

// Runs the planned workload on `region`. With crash_at > 0 the region
// captures a snapshot after that event and writers stop at their next op.
void RunWorkload(const TrialPlan& plan, PersistenceRegion& region, uint64_t crash_at, RunState& st,
                 uint64_t* workload_events) {
  FiberScheduler sched(plan.fiber_seed);
  log::LogHooks hooks;
  hooks.yield = [&] { sched.Yield(); };
  hooks.preempt = [&] { sched.Preempt(); };
  auto set = LocalSet(&region, plan.config);
  auto created = Log::Create(*set, plan.config, hooks);
  if (!created.ok()) {
    st.error = "create: " + created.status().ToString();
    return;
  }
  Log& log = **created;
  const uint64_t base = region.event_count();
  if (crash_at > 0) {
    region.ArmCrashPoint(base + crash_at, [&](uint64_t) {
      st.crash_max_forced = st.max_forced;
      st.crash_cleaned = st.cleaned;
      st.stop = true;
    });
  }
  const uint64_t freq = plan.policy.kind == ForcePolicy::Kind::kFrequency ? plan.policy.frequency : 1;

  for (uint32_t w = 0; w < plan.writers; ++w) {
    sched.Spawn([&, w] {
      std::vector<log::ReservationId> mine;
      for (size_t op = 0; op < plan.sizes[w].size(); ++op) {
        if (st.stop) return;
        const uint64_t size = plan.sizes[w][op];
        Result<log::ReservationId> id = Status::LogFull("");
        for (int attempt = 0; attempt < 50; ++attempt) {
          id = log.Reserve(size);
          if (id.ok() || id.status().code() != StatusCode::kLogFull) break;
          // Reclaim what this writer owns that is already durable.
          std::vector<log::ReservationId> keep;
          for (auto& m : mine) {
            if (m.lsn <= log.last_forced_lsn() && !st.stop) {
              st.cleaned.insert(m.lsn);
              if (!log.Cleanup(m).ok()) keep.push_back(m);
            } else {
              keep.push_back(m);
            }
          }
          mine.swap(keep);
          sched.Yield();
          if (st.stop) return;
        }
        if (!id.ok()) return;  // the others hold all the space
        Bytes data = Payload(size, (uint64_t{w} << 32) ^ op ^ plan.fiber_seed);
        st.payloads[id->lsn] = data;
        const uint64_t parts = plan.chunks[w][op];
        const uint64_t step = size / parts;
        for (uint64_t k = 0; k < parts; ++k) {
          uint64_t at = k * step;
          uint64_t len = k + 1 == parts ? size - at : step;
          if (!log.Copy(*id, ByteView(data).subspan(at, len), at).ok()) return;
          sched.Preempt();
        }
        if (!log.Complete(*id).ok()) return;
        auto fr = log.Force(*id, freq);
        if (!fr.ok()) return;  // wait timeout: leaves the trial to check what is there
        if (*fr == ForceResult::kForced) st.max_forced = std::max(st.max_forced, id->lsn);
        mine.push_back(*id);
      }
    });
  }
  sched.Run();
  if (workload_events) *workload_events = region.event_count() - base;
}

}  // namespace

std::string CsvField(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n') c = ';';
  }
  return s;
}

uint64_t MixSeed(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

TrialReport RunCrashTrial(const CrashTestOptions& opts, uint64_t trial, uint64_t seed) {
  TrialReport rep;
  rep.trial = trial;
  rep.seed = seed;
  TrialPlan plan = MakePlan(opts, seed);
  rep.writers = plan.writers;
  rep.policy = plan.policy.ToString();

  // Dry run to learn the length of the event stream.
  {
    PersistenceRegion region(plan.config.capacity);
    RunState st;
    RunWorkload(plan, region, 0, st, &rep.events);
    if (!st.error.empty()) {
      rep.pass = false;
      rep.violation = st.error;
      return rep;
    }
  }
  if (rep.events == 0) return rep;
  std::mt19937_64 rng(MixSeed(seed ^ 0xC0FFEEull));
  rep.crash_point = 1 + rng() % rep.events;

  PersistenceRegion region(plan.config.capacity);
  RunState st;
  RunWorkload(plan, region, rep.crash_point, st, nullptr);
  auto snap = region.TakeCrashSnapshot();
  if (!snap) {
    rep.pass = false;
    rep.violation = "run diverged from the dry run: crash point never reached";
    return rep;
  }
  rep.forced_lsn = st.crash_max_forced;

  PersistenceRegion crashed = snap->Materialize(pmem::FaultPlan::Random(plan.survive_seed));
  auto set = LocalSet(&crashed, plan.config);
  auto opened = Log::Open(*set, plan.config);
  if (!opened.ok()) {
    rep.pass = false;
    rep.violation = "recovery failed: " + opened.status().ToString();
    return rep;
  }
  Log& log = **opened;
  rep.recovered_tail_lsn = log.next_lsn() - 1;

  auto fail = [&](std::string why) {
    if (rep.pass) {
      rep.pass = false;
      rep.violation = std::move(why);
    }
  };
  std::set<uint64_t> yielded;
  uint64_t prev = 0;
  auto it = log.NewIterator();
  log::LogRecord rec;
  while (it.Next(&rec)) {
    ++rep.yielded;
    if (rec.lsn <= prev) fail("out of order lsn " + std::to_string(rec.lsn));
    prev = rec.lsn;
    auto p = st.payloads.find(rec.lsn);
    if (p == st.payloads.end()) {
      fail("phantom record lsn " + std::to_string(rec.lsn));
    } else if (p->second != rec.payload) {
      fail("corrupt record lsn " + std::to_string(rec.lsn));
    }
    yielded.insert(rec.lsn);
  }
  if (rep.recovered_tail_lsn < rep.forced_lsn) {
    fail("forced lsn " + std::to_string(rep.forced_lsn) + " lost, recovered up to " +
         std::to_string(rep.recovered_tail_lsn));
  }
  for (uint64_t l = 1; l <= rep.recovered_tail_lsn; ++l) {
    if (!yielded.count(l) && !st.crash_cleaned.count(l)) {
      fail("gap at lsn " + std::to_string(l));
      break;
    }
  }
  for (uint64_t l = 1; l <= rep.forced_lsn; ++l) {
    if (!yielded.count(l) && !st.crash_cleaned.count(l)) {
      fail("forced lsn " + std::to_string(l) + " missing");
      break;
    }
  }
  return rep;
}

CrashTestSummary RunCrashTest(const CrashTestOptions& opts, const std::function<void(const TrialReport&)>& sink) {
  CrashTestSummary sum;
  for (uint64_t i = 0; i < opts.trials; ++i) {
    TrialReport r = RunCrashTrial(opts, i, opts.seed + i);
    ++sum.trials;
    if (!r.pass) {
      ++sum.failures;
      if (!sum.first_failing_seed) sum.first_failing_seed = r.seed;
    }
    if (sink) sink(r);
  }
  return sum;
}

void WriteTrialCsvHeader(std::ostream& os) {
  os << "trial,seed,writers,policy,events,crash_point,forced_lsn,recovered_tail_lsn,yielded,result,violation\n";
}

void WriteTrialCsv(std::ostream& os, const TrialReport& r) {
  os << r.trial << ',' << r.seed << ',' << r.writers << ',' << r.policy << ',' << r.events << ',' << r.crash_point
     << ',' << r.forced_lsn << ',' << r.recovered_tail_lsn << ',' << r.yielded << ',' << (r.pass ? "pass" : "fail")
     << ',' << CsvField(r.violation) << '\n';
}

}  // namespace pmlog::harness
