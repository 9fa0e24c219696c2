#include "pmlog/harness/scenario.h"

#include <toml.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "pmlog/harness/crashtest.h"
#include "pmlog/kernels/line_diff.h"
#include "pmlog/log/log.h"
#include "pmlog/replication/membership.h"
#include "pmlog/replication/sim_cluster.h"

namespace pmlog::harness {

namespace {

using log::Mode;
using replication::FailOverResult;
using replication::SimCluster;

std::string Normalize(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c != '_' && c != '-' && c != ' ') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

bool Matches(const Status& st, const std::string& expect) {
  return Normalize(StatusCodeName(st.code())) == Normalize(expect);
}

std::vector<log::LogRecord> Records(const log::Log& l) {
  std::vector<log::LogRecord> out;
  auto it = l.NewIterator();
  log::LogRecord r;
  while (it.Next(&r)) out.push_back(r);
  return out;
}

uint64_t EpochOf(ByteView image) {
  auto sl = log::ReadSuperline(image);
  return sl.ok() ? sl->epoch : 0;
}

Result<pmem::FaultPlan> ParseSurvival(const std::string& s, uint64_t seed) {
  if (s == "drop_all") return pmem::FaultPlan::DropAll();
  if (s == "keep_all") return pmem::FaultPlan::KeepAll();
  if (s == "random") return pmem::FaultPlan::Random(seed);
  return Status::InvalidArgument("unknown survival '" + s + "'");
}

class Runner {
 public:
  Runner(log::LogConfig cfg, transport::NetworkConditions net) : cfg_(cfg), cluster_(cfg, net) {}

  Status Step(const toml::table& t, size_t index, ScenarioResult& res);

 private:
  Result<int> Node(const toml::node_view<const toml::node>& v) {
    if (auto s = v.value<std::string>()) {
      if (*s == "primary") {
        if (!cur_) return Status::InvalidArgument("no primary");
        return cluster_.client_node(cur_->primary);
      }
      return Status::InvalidArgument("bad node '" + *s + "'");
    }
    if (auto i = v.value<int64_t>(); i && *i >= 0 && *i < static_cast<int64_t>(cluster_.replicas())) {
      return cluster_.node(static_cast<int>(*i));
    }
    return Status::InvalidArgument("bad node reference");
  }
  Result<int> Replica(const toml::table& t) {
    auto i = t["replica"].value<int64_t>();
    if (!i || *i < 0 || *i >= static_cast<int64_t>(cluster_.replicas())) {
      return Status::InvalidArgument("step needs replica in [0, N)");
    }
    return static_cast<int>(*i);
  }

  log::LogConfig cfg_;
  SimCluster cluster_;
  replication::MembershipStub stub_;
  std::optional<FailOverResult> cur_, old_;
};

Status Runner::Step(const toml::table& t, size_t index, ScenarioResult& res) {
  auto op = t["op"].value<std::string>();
  if (!op) return Status::InvalidArgument("step " + std::to_string(index) + " has no op");
  std::string expect = t["expect"].value_or<std::string>("ok");
  std::string line = "step " + std::to_string(index) + " " + *op;
  Status outcome;
  bool checks_status = true;
  auto need_log = [&]() -> Status {
    if (!cur_ || !cur_->log) return Status::WrongState("no open log");
    return Status::OK();
  };
  auto fail = [&](const std::string& why) {
    if (res.pass) {
      res.pass = false;
      res.failure = line + ": " + why;
    }
  };

  if (*op == "create" || *op == "open") {
    int p = static_cast<int>(t["primary"].value_or<int64_t>(0));
    cur_.reset();
    stub_ = replication::MembershipStub(p);
    auto r = *op == "create" ? cluster_.Create(p) : cluster_.Open(p);
    outcome = r.status();
    if (r.ok()) cur_ = std::move(r.value());
  } else if (*op == "failover") {
    if (t["keep_old"].value_or(false)) {
      old_ = std::move(cur_);
    }
    cur_.reset();
    auto r = replication::FailOver(stub_, cluster_, cfg_);
    outcome = r.status();
    if (r.ok()) {
      line += " -> primary " + std::to_string(r->primary);
      cur_ = std::move(r.value());
    }
  } else if (*op == "append" || *op == "append_old") {
    auto& target = *op == "append" ? cur_ : old_;
    if (!target || !target->log) {
      outcome = Status::WrongState("no log for " + *op);
    } else {
      Bytes data;
      if (auto s = t["payload"].value<std::string>()) {
        data = ToBytes(*s);
      } else {
        data.assign(static_cast<size_t>(t["size"].value_or<int64_t>(64)), 0x42);
      }
      int64_t count = t["count"].value_or<int64_t>(1);
      for (int64_t i = 0; i < count && outcome.ok(); ++i) {
        auto id = target->log->Append(data);
        outcome = id.status();
      }
    }
  } else if (*op == "flush") {
    outcome = need_log();
    if (outcome.ok()) outcome = cur_->log->Flush();
  } else if (*op == "cleanup") {
    outcome = need_log();
    if (outcome.ok()) {
      int64_t count = t["count"].value_or<int64_t>(1);
      auto rs = Records(*cur_->log);
      for (int64_t i = 0; i < count && i < static_cast<int64_t>(rs.size()) && outcome.ok(); ++i) {
        outcome = cur_->log->Cleanup(rs[i].id);
      }
    }
  } else if (*op == "partition" || *op == "heal") {
    auto a = Node(t["a"]);
    auto b = Node(t["b"]);
    if (!a.ok()) return a.status();
    if (!b.ok()) return b.status();
    if (*op == "partition") {
      cluster_.net().Partition(*a, *b);
    } else {
      cluster_.net().Heal(*a, *b);
    }
  } else if (*op == "heal_all") {
    cluster_.net().HealAll();
  } else if (*op == "down" || *op == "up") {
    auto r = Replica(t);
    if (!r.ok()) return r.status();
    cluster_.SetReplicaUp(*r, *op == "up");
  } else if (*op == "crash") {
    auto r = Replica(t);
    if (!r.ok()) return r.status();
    auto plan = ParseSurvival(t["survival"].value_or<std::string>("drop_all"),
                              static_cast<uint64_t>(t["seed"].value_or<int64_t>(1)));
    if (!plan.ok()) return plan.status();
    if (cur_ && cur_->primary == *r && cfg_.mode != Mode::kRemoteOnly) cur_.reset();
    cluster_.CrashReplica(*r, *plan);
  } else if (*op == "kill_primary") {
    if (!cur_) return Status::InvalidArgument("kill_primary without a primary");
    int p = cur_->primary;
    cur_.reset();
    if (cfg_.mode != Mode::kRemoteOnly) {
      auto plan = ParseSurvival(t["survival"].value_or<std::string>("drop_all"),
                                static_cast<uint64_t>(t["seed"].value_or<int64_t>(1)));
      if (!plan.ok()) return plan.status();
      cluster_.CrashReplica(p, *plan);
    }
  } else if (*op == "media_error") {
    auto r = Replica(t);
    if (!r.ok()) return r.status();
    outcome = cluster_.region(*r).InjectMediaError(static_cast<uint64_t>(t["offset"].value_or<int64_t>(0)),
                                                   static_cast<uint64_t>(t["length"].value_or<int64_t>(64)));
  } else if (*op == "expect_records") {
    checks_status = false;
    if (Status s = need_log(); !s.ok()) {
      fail(s.ToString());
    } else {
      auto rs = Records(*cur_->log);
      if (auto* arr = t["payloads"].as_array()) {
        std::vector<std::string> want, got;
        for (auto& e : *arr) want.push_back(e.value_or<std::string>(""));
        for (auto& r : rs) got.emplace_back(r.payload.begin(), r.payload.end());
        if (want != got) {
          std::string g;
          for (auto& s : got) g += "'" + s + "' ";
          fail("records are " + g);
        }
      }
      if (auto n = t["count"].value<int64_t>(); n && static_cast<int64_t>(rs.size()) != *n) {
        fail("expected " + std::to_string(*n) + " records, found " + std::to_string(rs.size()));
      }
      if (auto l = t["first_lsn"].value<int64_t>(); l && (rs.empty() || static_cast<int64_t>(rs[0].lsn) != *l)) {
        fail("first lsn mismatch");
      }
      line += " (" + std::to_string(rs.size()) + " records)";
    }
  } else if (*op == "expect_epoch") {
    checks_status = false;
    auto want = t["value"].value<int64_t>();
    if (!want) return Status::InvalidArgument("expect_epoch needs value");
    if (Status s = need_log(); !s.ok()) {
      fail(s.ToString());
    } else if (static_cast<int64_t>(cur_->log->epoch()) != *want) {
      fail("epoch is " + std::to_string(cur_->log->epoch()));
    }
  } else if (*op == "expect_identical") {
    checks_status = false;
    int first = -1;
    for (uint32_t i = 0; i < cluster_.replicas(); ++i) {
      if (!cluster_.replica_up(static_cast<int>(i))) continue;
      if (first < 0) {
        first = static_cast<int>(i);
      } else if (!kernels::ImagesEqual(cluster_.region(first).persistent_image(),
                                       cluster_.region(static_cast<int>(i)).persistent_image())) {
        fail("replica " + std::to_string(i) + " differs from replica " + std::to_string(first));
      }
    }
  } else {
    return Status::InvalidArgument("unknown op '" + *op + "'");
  }

  if (checks_status) {
    line += " => " + std::string(StatusCodeName(outcome.code()));
    if (!Matches(outcome, expect)) fail("expected " + expect + ", got " + outcome.ToString());
  } else {
    line += res.pass ? " => as expected" : " => MISMATCH";
  }
  res.trace.push_back(line);
  return Status::OK();
}

}  // namespace

Result<ScenarioResult> RunScenarioText(const std::string& text, std::optional<uint64_t> seed_override) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    return Status::InvalidArgument(std::string("scenario parse error: ") + std::string(e.description()));
  }
  auto cfg = log::ParseLogConfig(text);
  if (!cfg.ok()) return cfg.status();
  cfg->force_wait_timeout_ms = std::min<uint64_t>(cfg->force_wait_timeout_ms, 1000);
  transport::NetworkConditions net;
  ScenarioResult res;
  if (auto* s = root["scenario"].as_table()) {
    res.name = (*s)["name"].value_or<std::string>("");
    net.seed = static_cast<uint64_t>((*s)["seed"].value_or<int64_t>(1));
    net.latency_min = static_cast<uint64_t>((*s)["latency_min"].value_or<int64_t>(1));
    net.latency_max = static_cast<uint64_t>((*s)["latency_max"].value_or<int64_t>(4));
  }
  if (seed_override) net.seed = *seed_override;
  auto* steps = root["step"].as_array();
  if (!steps || steps->empty()) return Status::InvalidArgument("scenario has no [[step]] entries");
  Runner runner(*cfg, net);
  size_t i = 0;
  for (auto& node : *steps) {
    auto* t = node.as_table();
    if (!t) return Status::InvalidArgument("step " + std::to_string(i) + " is not a table");
    PMLOG_RETURN_IF_ERROR(runner.Step(*t, i, res));
    ++i;
  }
  return res;
}

Result<ScenarioResult> RunScenarioFile(const std::string& path, std::optional<uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) return Status::IoError("cannot read scenario " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return RunScenarioText(ss.str(), seed_override);
}

// ---- fuzz ----

FuzzCase RunFuzzCase(uint64_t seed, uint32_t rounds) {
  std::mt19937_64 rng(MixSeed(seed));
  FuzzCase fc;
  fc.seed = seed;
  fc.n = rng() % 2 == 0 ? 3 : 5;
  fc.w = fc.n - 1;
  const Mode mode = rng() % 2 == 0 ? Mode::kLocalRemote : Mode::kRemoteOnly;
  fc.mode = log::ModeName(mode);

  log::LogConfig cfg;
  cfg.capacity = 8192;
  cfg.mode = mode;
  cfg.replicas = fc.n;
  cfg.write_quorum = fc.w;
  cfg.net_timeout_ticks = 60;
  cfg.flush_order = static_cast<log::FlushOrder>(rng() % 3);
  transport::NetworkConditions net;
  net.seed = rng();
  SimCluster cluster(cfg, net);
  replication::MembershipStub stub(0);

  auto fail = [&](std::string why) {
    if (fc.pass) {
      fc.pass = false;
      fc.violation = std::move(why);
    }
  };

  auto created = cluster.Create(0);
  if (!created.ok()) {
    fail("create: " + created.status().ToString());
    return fc;
  }
  std::optional<FailOverResult> cur = std::move(created.value());

  std::map<uint64_t, Bytes> durable;        // must be yielded by every later recovery
  std::map<uint64_t, Bytes> ever_yielded;   // first payload ever yielded per LSN
  std::vector<uint64_t> epochs(fc.n, 1);
  const uint32_t budget = fc.n - fc.w;
  auto note = [&](std::string s) { fc.trace.push_back(std::move(s)); };

  for (uint32_t round = 0; round < rounds && fc.pass; ++round) {
    ++fc.rounds;
    const int primary = cur->primary;
    const int from = cluster.client_node(primary);
    const int ops = static_cast<int>(rng() % 24);
    for (int i = 0; i < ops; ++i) {
      uint64_t dice = rng() % 100;
      if (dice < 12) {
        int r = static_cast<int>(rng() % fc.n);
        if (!(mode == Mode::kLocalRemote && r == primary)) {
          cluster.net().Partition(from, cluster.node(r));
          note("partition primary-" + std::to_string(r));
        }
      } else if (dice < 16) {
        cluster.net().HealAll();
        note("heal_all");
      } else if (dice < 20) {
        // A failed cleanup may still have moved the head on some copies, so
        // the record becomes optional either way.
        auto rs = Records(*cur->log);
        if (!rs.empty()) {
          Status cs = cur->log->Cleanup(rs[0].id);
          note("cleanup lsn " + std::to_string(rs[0].lsn) + " -> " + std::string(StatusCodeName(cs.code())));
          durable.erase(rs[0].lsn);
        }
      } else {
        Bytes d(1 + rng() % 300);
        for (auto& b : d) b = static_cast<uint8_t>(rng());
        auto id = cur->log->Append(d);
        if (id.ok()) {
          durable[id->lsn] = d;
          ++fc.appends_acked;
          note("append lsn " + std::to_string(id->lsn));
        } else if (id.status().code() != StatusCode::kLogFull) {
          note("append " + id.status().ToString());
        } else if (id.status().code() == StatusCode::kLogFull) {
          auto rs = Records(*cur->log);
          for (size_t k = 0; k < rs.size() / 2; ++k) {
            (void)cur->log->Cleanup(rs[k].id);
            durable.erase(rs[k].lsn);
          }
          note("log full, cleaned up to lsn " + std::to_string(rs.empty() ? 0 : rs[rs.size() / 2].lsn));
        }
      }
    }
    cur.reset();
    cluster.net().HealAll();

    // Power failures: harmless to forced data, they only drop unforced lines.
    if (mode == Mode::kLocalRemote) cluster.CrashReplica(primary, pmem::FaultPlan::Random(rng()));
    for (uint32_t i = 0; i < fc.n; ++i) {
      if (rng() % 3 == 0) {
        cluster.CrashReplica(static_cast<int>(i), pmem::FaultPlan::Random(rng()));
        note("power failure " + std::to_string(i));
      }
    }
    // Impairments within the N-W budget: a copy that is down, or damaged.
    std::vector<int> down;
    const uint32_t victims = static_cast<uint32_t>(rng() % (budget + 1));
    std::set<int> hit;
    for (uint32_t v = 0; v < victims; ++v) {
      int r = static_cast<int>(rng() % fc.n);
      if (!hit.insert(r).second) continue;
      if (rng() % 2 == 0) {
        cluster.SetReplicaUp(r, false);
        down.push_back(r);
        note("down " + std::to_string(r));
      } else {
        uint64_t off = rng() % cfg.capacity;
        uint64_t len = 1 + rng() % 256;
        (void)cluster.region(r).InjectMediaError(off, std::min(len, cfg.capacity - off));
        note("media_error " + std::to_string(r) + " @" + std::to_string(off) + "+" + std::to_string(len));
      }
    }

    auto next = stub.ElectNewPrimary(cluster.PrimaryCandidates());
    if (!next.ok()) {
      fail("election: " + next.status().ToString());
      break;
    }
    stub.NotifyBackups(cluster);
    if (rng() % 2 == 0) {
      // Recovery dies part way through, then the new primary restarts.
      auto set = cluster.MakeReplicaSet(*next);
      set->FailRecoveryAfterWrites(rng() % 10);
      Status st;
      {
        auto l = log::Log::Open(*set, cfg);
        st = l.status();
      }
      set.reset();
      note("interrupted recovery -> " + std::string(StatusCodeName(st.code())));
      if (st.code() == StatusCode::kCrashed) {
        ++fc.interrupted_recoveries;
        if (mode == Mode::kLocalRemote) cluster.CrashReplica(*next, pmem::FaultPlan::Random(rng()));
      } else if (!st.ok()) {
        fail("interrupted recovery: " + st.ToString());
        break;
      }
    }
    auto opened = cluster.Open(*next);
    if (!opened.ok()) {
      fail("recovery within failure budget: " + opened.status().ToString());
      break;
    }
    cur = std::move(opened.value());
    note("recovered primary " + std::to_string(*next) + " epoch " + std::to_string(cur->log->epoch()) +
         " next_lsn " + std::to_string(cur->log->next_lsn()) + " chosen " +
         std::to_string(cur->set->last_report().chosen));

    auto rs = Records(*cur->log);
    std::map<uint64_t, Bytes> got;
    for (auto& r : rs) got[r.lsn] = r.payload;
    note("yielded " + std::to_string(rs.size()) + " records" +
         (rs.empty() ? "" : " from lsn " + std::to_string(rs.front().lsn)));
    for (auto& [lsn, d] : durable) {
      auto g = got.find(lsn);
      if (g == got.end()) {
        fail("forced record lost: lsn " + std::to_string(lsn) + " round " + std::to_string(round));
      } else if (g->second != d) {
        fail("forced record changed: lsn " + std::to_string(lsn));
      }
    }
    for (auto& [lsn, d] : got) {
      auto [it, fresh] = ever_yielded.emplace(lsn, d);
      if (!fresh && it->second != d) fail("diverging commit at lsn " + std::to_string(lsn));
    }
    durable = got;

    int first_up = -1;
    uint32_t at_max = 0;
    for (uint32_t i = 0; i < fc.n; ++i) {
      const int r = static_cast<int>(i);
      uint64_t e = EpochOf(cluster.region(r).persistent_image());
      if (e != 0) {
        if (e < epochs[i]) fail("epoch went down on replica " + std::to_string(i));
        epochs[i] = std::max(epochs[i], e);
      }
      if (e == cur->log->epoch()) ++at_max;
      if (!cluster.replica_up(r)) continue;
      if (first_up < 0) {
        first_up = r;
      } else if (!kernels::ImagesEqual(cluster.region(first_up).persistent_image(),
                                       cluster.region(r).persistent_image())) {
        fail("replicas " + std::to_string(first_up) + " and " + std::to_string(r) + " differ after recovery");
      }
    }
    if (at_max < fc.w) fail("only " + std::to_string(at_max) + " replicas at the new epoch");
    for (int r : down) cluster.SetReplicaUp(r, true);
  }
  return fc;
}

FuzzSummary RunScenarioFuzz(const FuzzOptions& opts, const std::function<void(const FuzzCase&)>& sink) {
  FuzzSummary sum;
  for (uint64_t i = 0; i < opts.seeds; ++i) {
    FuzzCase c = RunFuzzCase(opts.seed + i, opts.rounds);
    ++sum.cases;
    sum.interrupted_recoveries += c.interrupted_recoveries;
    if (!c.pass) {
      ++sum.failures;
      if (!sum.first_failing_seed) sum.first_failing_seed = c.seed;
    }
    if (sink) sink(c);
  }
  return sum;
}

void WriteFuzzCsvHeader(std::ostream& os) {
  os << "seed,n,w,mode,rounds,appends_acked,interrupted_recoveries,result,violation\n";
}

void WriteFuzzCsv(std::ostream& os, const FuzzCase& c) {
  os << c.seed << ',' << c.n << ',' << c.w << ',' << c.mode << ',' << c.rounds << ',' << c.appends_acked << ','
     << c.interrupted_recoveries << ',' << (c.pass ? "pass" : "fail") << ',' << CsvField(c.violation) << '\n';
}

}  // namespace pmlog::harness
