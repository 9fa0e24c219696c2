#include <gtest/gtest.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <random>
#include <thread>

#include "pmlog/transport/sim_network.h"
#include "pmlog/transport/socket.h"
#include "pmlog/transport/wire.h"

namespace pmlog::transport {
namespace {

using pmem::FaultPlan;
using pmem::PersistenceRegion;

Bytes Pattern(size_t n, uint8_t seed) {
  Bytes b(n);
  for (size_t i = 0; i < n; ++i) b[i] = static_cast<uint8_t>(seed * 17 + i * 5 + 3);
  return b;
}

Bytes Slice(ByteView v, size_t off, size_t n) { return Bytes(v.begin() + off, v.begin() + off + n); }

// ---- wire ----

TEST(WireTest, HeaderLayoutIsLittleEndian) {
  auto b = Encode(Frame::WriteAndForce(0x0102030405060708ull, AsBytes("xyz")));
  ASSERT_EQ(b.size(), kFrameHeaderSize + 3);
  const uint8_t expect[] = {1, 0, 0, 0, 8, 7, 6, 5, 4, 3, 2, 1, 3, 0, 0, 0, 'x', 'y', 'z'};
  EXPECT_EQ(b, Bytes(std::begin(expect), std::end(expect)));
}

TEST(WireTest, RoundTripEveryType) {
  std::vector<Frame> frames = {
      Frame::WriteAndForce(4096, Pattern(100, 1)),
      Frame::Ack(FrameType::kForceAck, WireStatus::kRange, 4096, 100),
      Frame::ReadReq(64, 512),
      Frame::ReadResp(WireStatus::kOk, Pattern(37, 2)),
      Frame::ReadResp(WireStatus::kFenced, {}),
      Frame::Simple(FrameType::kEpochWrite, 99),
      Frame::Ack(FrameType::kEpochAck, WireStatus::kStaleEpoch, 7),
      Frame::Simple(FrameType::kHello),
      Frame::Ack(FrameType::kHelloAck, WireStatus::kOk, 12),
      Frame::Simple(FrameType::kFence),
      Frame::Ack(FrameType::kFenceAck, WireStatus::kOk),
  };
  for (const auto& f : frames) {
    auto d = Decode(Encode(f));
    ASSERT_TRUE(d.ok()) << d.status().ToString();
    EXPECT_EQ(d->type, f.type);
    EXPECT_EQ(d->offset, f.offset);
    EXPECT_EQ(d->length, f.length);
    EXPECT_EQ(d->status, f.status);
    EXPECT_EQ(d->payload, f.payload);
  }
}

TEST(WireTest, MalformedFramesRejected) {
  auto b = Encode(Frame::WriteAndForce(0, Pattern(10, 1)));
  b.pop_back();
  EXPECT_EQ(Decode(b).status().code(), StatusCode::kCorruption);
  Bytes bad(kFrameHeaderSize, 0);
  bad[0] = 77;
  EXPECT_EQ(Decode(bad).status().code(), StatusCode::kCorruption);
  auto ack = Encode(Frame::Ack(FrameType::kForceAck, WireStatus::kOk));
  ack[kFrameHeaderSize] = 9;  // unknown status
  EXPECT_EQ(Decode(ack).status().code(), StatusCode::kCorruption);
}

// ---- simulated transport ----

struct SimFixture {
  explicit SimFixture(NetworkConditions c = {}, size_t cap = 1 << 16) : net(c), region(cap) {
    client = net.AddClient();
    backup = net.AddBackup(&region);
    ep = net.Connect(client, backup, 1);
  }
  SimNetwork net;
  PersistenceRegion region;
  int client = 0, backup = 0;
  std::unique_ptr<Endpoint> ep;
};

TEST(SimTransportTest, AckedWriteSurvivesBackupCrash) {
  SimFixture f;
  ASSERT_TRUE(f.ep->Reconnect().ok());
  EXPECT_EQ(f.ep->state(), EndpointState::kConnected);
  auto data = Pattern(1024, 4);
  ASSERT_TRUE(f.ep->WriteAndForce(2048, data).ok());
  auto crashed = f.region.SimulateCrash(FaultPlan::DropAll());
  EXPECT_EQ(*crashed.Read(2048, 1024), data);
  auto back = f.ep->RemoteRead(2048, 1024);
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(*back, data);
}

TEST(SimTransportTest, OutOfRangeWriteReported) {
  SimFixture f({}, 4096);
  ASSERT_TRUE(f.ep->Reconnect().ok());
  EXPECT_EQ(f.ep->WriteAndForce(4090, Pattern(10, 0)).code(), StatusCode::kOutOfRange);
  EXPECT_EQ(f.ep->state(), EndpointState::kConnected);
}

TEST(SimTransportTest, PartitionTimesOutAndCloses) {
  SimFixture f;
  ASSERT_TRUE(f.ep->Reconnect().ok());
  uint64_t start = f.net.now();
  f.net.Partition(f.client, f.backup);
  EXPECT_EQ(f.ep->WriteAndForce(0, Pattern(64, 1)).code(), StatusCode::kTimeout);
  EXPECT_EQ(f.net.now(), start + kDefaultSimTimeoutTicks);
  EXPECT_EQ(f.ep->state(), EndpointState::kClosed);
  EXPECT_EQ(f.ep->RemoteRead(0, 8).status().code(), StatusCode::kClosed);
}

TEST(SimTransportTest, ReadDuringPartitionTimesOut) {
  SimFixture f;
  ASSERT_TRUE(f.ep->Reconnect().ok());
  f.net.Partition(f.backup, f.client);
  EXPECT_EQ(f.ep->RemoteRead(0, 64).status().code(), StatusCode::kTimeout);
}

TEST(SimTransportTest, HealDoesNotResurrectClosedConnection) {
  SimFixture f;
  ASSERT_TRUE(f.ep->Reconnect().ok());
  uint64_t gen_before = f.net.backup(f.backup).generation();
  f.net.Partition(f.client, f.backup);
  EXPECT_EQ(f.ep->WriteAndForce(0, Pattern(64, 1)).code(), StatusCode::kTimeout);
  f.net.Heal(f.client, f.backup);
  EXPECT_EQ(f.ep->WriteAndForce(0, Pattern(64, 2)).code(), StatusCode::kClosed);
  EXPECT_EQ(f.net.backup(f.backup).writes_applied(), 0u);
  ASSERT_TRUE(f.ep->Reconnect().ok());
  EXPECT_GT(f.net.backup(f.backup).generation(), gen_before);
  EXPECT_TRUE(f.ep->WriteAndForce(0, Pattern(64, 3)).ok());
}

TEST(SimTransportTest, InFlightMessageOfClosedConnectionNeverApplied) {
  SimFixture f;
  auto ep = f.net.Connect(f.client, f.backup, 1, /*timeout_ticks=*/60);
  ASSERT_TRUE(ep->Reconnect().ok());
  NetworkConditions slow;
  slow.latency_min = slow.latency_max = 80;  // one way exceeds the timeout
  f.net.SetConditions(slow);
  EXPECT_EQ(ep->WriteAndForce(0, Pattern(64, 9)).code(), StatusCode::kTimeout);
  f.net.RunUntilIdle();  // the request reaches the backup after the close
  EXPECT_EQ(f.net.backup(f.backup).writes_applied(), 0u);
  EXPECT_EQ(*f.region.Read(0, 64), Bytes(64, 0));

  // explicit close with a request in flight
  f.net.SetConditions({});
  ASSERT_TRUE(ep->Reconnect().ok());
  ASSERT_TRUE(ep->BeginWriteAndForce(0, Pattern(64, 10)).ok());
  ep->Close();
  f.net.RunUntilIdle();
  EXPECT_EQ(f.net.backup(f.backup).writes_applied(), 0u);
}

TEST(SimTransportTest, NewerConnectionDeposesOlder) {
  SimFixture f;
  ASSERT_TRUE(f.ep->Reconnect().ok());
  auto other = f.net.Connect(f.client, f.backup, 1);
  ASSERT_TRUE(other->Reconnect().ok());
  EXPECT_EQ(f.ep->WriteAndForce(0, Pattern(64, 1)).code(), StatusCode::kFenced);
  EXPECT_EQ(f.ep->state(), EndpointState::kFenced);
  EXPECT_TRUE(other->WriteAndForce(0, Pattern(64, 2)).ok());
}

TEST(SimTransportTest, FenceDeposesConnectionAndStaleEpochRefused) {
  SimFixture f;
  ASSERT_TRUE(f.ep->Reconnect().ok());
  ASSERT_TRUE(f.ep->WriteEpoch(5).ok());
  EXPECT_EQ(f.net.backup(f.backup).accepted_epoch(), 5u);
  f.net.FenceBackup(f.backup);
  EXPECT_EQ(f.ep->WriteAndForce(0, Pattern(8, 0)).code(), StatusCode::kFenced);
  EXPECT_EQ(f.ep->state(), EndpointState::kFenced);
  ASSERT_TRUE(f.ep->Reconnect().ok());
  EXPECT_EQ(f.ep->WriteEpoch(4).code(), StatusCode::kStaleEpoch);
  EXPECT_EQ(f.ep->state(), EndpointState::kFenced);
  ASSERT_TRUE(f.ep->Reconnect().ok());
  EXPECT_TRUE(f.ep->WriteEpoch(6).ok());
}

TEST(SimTransportTest, DownNodeTimesOutAndRestartNeedsReconnect) {
  SimFixture f;
  ASSERT_TRUE(f.ep->Reconnect().ok());
  f.net.SetNodeUp(f.backup, false);
  EXPECT_EQ(f.ep->WriteAndForce(0, Pattern(8, 0)).code(), StatusCode::kTimeout);
  EXPECT_EQ(f.ep->Reconnect().code(), StatusCode::kTimeout);
  f.net.SetNodeUp(f.backup, true);
  ASSERT_TRUE(f.ep->Reconnect().ok());
  EXPECT_TRUE(f.ep->WriteAndForce(0, Pattern(8, 0)).ok());
}

TEST(SimTransportTest, RemoteReadSeesMediaErrors) {
  SimFixture f;
  ASSERT_TRUE(f.ep->Reconnect().ok());
  auto data = Pattern(256, 6);
  ASSERT_TRUE(f.ep->WriteAndForce(512, data).ok());
  ASSERT_TRUE(f.region.InjectMediaError(600, 10, 0x5A).ok());
  Bytes expect = data;
  for (size_t i = 600 - 512; i < 600 - 512 + 10; ++i) expect[i] ^= 0x5A;
  EXPECT_EQ(*f.ep->RemoteRead(512, 256), expect);
}

// Two outstanding writes to disjoint ranges, issued on one or two
// endpoints and awaited in either order, over many latency draws.
TEST(SimTransportTest, ConcurrentDisjointWritesBothDurable) {
  for (uint64_t seed = 1; seed <= 200; ++seed) {
    NetworkConditions c;
    c.latency_min = 1;
    c.latency_max = 40;
    c.seed = seed;
    SimFixture f(c);
    const bool two_endpoints = seed % 2 == 0;
    ASSERT_TRUE(f.ep->Reconnect().ok());
    // a second endpoint to the same backup would depose the first, so it
    // targets a second backup node
    PersistenceRegion other(1 << 16);
    int b2 = f.net.AddBackup(&other);
    auto ep_b2 = f.net.Connect(f.client, b2, 2);
    ASSERT_TRUE(ep_b2->Reconnect().ok());
    Endpoint* second = two_endpoints ? ep_b2.get() : f.ep.get();
    PersistenceRegion* second_region = two_endpoints ? &other : &f.region;

    auto a = Pattern(300, static_cast<uint8_t>(seed)), b = Pattern(200, static_cast<uint8_t>(seed + 1));
    auto ta = f.ep->BeginWriteAndForce(0, a);
    auto tb = second->BeginWriteAndForce(1024, b);
    ASSERT_TRUE(ta.ok() && tb.ok());
    if (seed % 3 == 0) {
      ASSERT_TRUE(second->Await(*tb).ok());
      ASSERT_TRUE(f.ep->Await(*ta).ok());
    } else {
      ASSERT_TRUE(f.ep->Await(*ta).ok());
      ASSERT_TRUE(second->Await(*tb).ok());
    }
    EXPECT_EQ(*f.region.SimulateCrash(FaultPlan::DropAll()).Read(0, 300), a);
    EXPECT_EQ(*second_region->SimulateCrash(FaultPlan::DropAll()).Read(1024, 200), b);
  }
}

TEST(SimTransportTest, RealThreadsConcurrentWrites) {
  NetworkConditions c;
  c.latency_max = 20;
  SimFixture f(c);
  ASSERT_TRUE(f.ep->Reconnect().ok());
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        ASSERT_TRUE(f.ep->WriteAndForce(static_cast<uint64_t>(t * 4096 + i * 64), Pattern(64, static_cast<uint8_t>(t + i))).ok());
      }
    });
  }
  for (auto& th : threads) th.join();
  auto crashed = f.region.SimulateCrash(FaultPlan::DropAll());
  for (int t = 0; t < 4; ++t) {
    for (int i = 0; i < 50; ++i) {
      EXPECT_EQ(*crashed.Read(static_cast<uint64_t>(t * 4096 + i * 64), 64), Pattern(64, static_cast<uint8_t>(t + i)));
    }
  }
}

TEST(SimTransportTest, PerEndpointOrderIsFifo) {
  NetworkConditions c;
  c.latency_min = 1;
  c.latency_max = 100;
  c.seed = 77;
  SimFixture f(c);
  ASSERT_TRUE(f.ep->Reconnect().ok());
  std::vector<Ticket> ts;
  for (uint8_t i = 0; i < 50; ++i) ts.push_back(*f.ep->BeginWriteAndForce(0, Bytes(16, i)));
  for (auto t : ts) ASSERT_TRUE(f.ep->Await(t).ok());
  EXPECT_EQ(*f.region.Read(0, 16), Bytes(16, 49));
}

std::vector<std::pair<int, uint64_t>> RecordDeliveries(uint64_t seed) {
  NetworkConditions c;
  c.latency_min = 1;
  c.latency_max = 30;
  c.drop_probability = 0.1;
  c.seed = seed;
  SimNetwork net(c);
  std::vector<PersistenceRegion> regions;
  regions.reserve(3);
  int client = net.AddClient();
  std::vector<std::unique_ptr<Endpoint>> eps;
  for (int i = 0; i < 3; ++i) {
    regions.emplace_back(1 << 14);
    int n = net.AddBackup(&regions.back());
    eps.push_back(net.Connect(client, n, i, 100));
  }
  std::vector<std::pair<int, uint64_t>> log;
  net.SetDeliveryHook([&](int node, const Frame& f) { log.emplace_back(node, f.offset); });
  for (int round = 0; round < 40; ++round) {
    std::vector<std::pair<Endpoint*, Ticket>> ts;
    for (auto& ep : eps) {
      if (ep->state() != EndpointState::kConnected) (void)ep->Reconnect();
      auto t = ep->BeginWriteAndForce(static_cast<uint64_t>(round) * 64, Pattern(64, static_cast<uint8_t>(round)));
      if (t.ok()) ts.emplace_back(ep.get(), *t);
    }
    for (auto [ep, t] : ts) (void)ep->Await(t);
  }
  log.emplace_back(-1, net.now());
  return log;
}

TEST(SimTransportTest, SeededDeliveryOrderReplaysIdentically) {
  auto a = RecordDeliveries(1234), b = RecordDeliveries(1234), c = RecordDeliveries(4321);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

// Ack-implies-durability under a lossy network: after every ack the backup
// is crashed with a random survival policy and the acked bytes must be there.
TEST(SimTransportTest, AckImpliesDurabilityRandomized) {
  NetworkConditions c;
  c.latency_max = 10;
  c.drop_probability = 0.15;
  c.seed = 5;
  SimFixture f(c);
  std::mt19937_64 rng(99);
  int acks = 0;
  for (int i = 0; i < 300; ++i) {
    if (f.ep->state() != EndpointState::kConnected && !f.ep->Reconnect().ok()) continue;
    uint64_t off = rng() % 60000;
    size_t len = 1 + rng() % 500;
    auto data = Pattern(len, static_cast<uint8_t>(rng()));
    if (!f.ep->WriteAndForce(off, data).ok()) continue;
    ++acks;
    auto crashed = f.region.SimulateCrash(FaultPlan::Random(rng()));
    ASSERT_EQ(*crashed.Read(off, len), data) << "write " << i;
  }
  EXPECT_GT(acks, 150);
}

// ---- socket transport ----

TEST(SocketTransportTest, RoundTripAndFencing) {
  PersistenceRegion region(1 << 16);
  BackupServer server(&region);
  ASSERT_TRUE(server.Listen().ok());
  server.Start();
  SocketEndpoint ep("127.0.0.1", server.port(), 1, std::chrono::milliseconds(2000));
  EXPECT_EQ(ep.state(), EndpointState::kClosed);
  ASSERT_TRUE(ep.Reconnect().ok());
  auto data = Pattern(3000, 8);
  ASSERT_TRUE(ep.WriteAndForce(100, data).ok());
  EXPECT_EQ(Slice(region.SimulateCrash(FaultPlan::DropAll()).persistent_image(), 100, 3000), data);
  EXPECT_EQ(*ep.RemoteRead(100, 3000), data);

  std::vector<Ticket> ts;
  for (uint8_t i = 0; i < 20; ++i) ts.push_back(*ep.BeginWriteAndForce(64u * i, Bytes(64, i)));
  for (auto t : ts) ASSERT_TRUE(ep.Await(t).ok());
  EXPECT_EQ(*region.Read(64 * 19, 64), Bytes(64, 19));

  EXPECT_EQ(ep.WriteAndForce(1 << 16, Pattern(4, 0)).code(), StatusCode::kOutOfRange);
  ASSERT_TRUE(ep.WriteEpoch(3).ok());
  server.service().Fence();
  EXPECT_EQ(ep.WriteAndForce(0, Pattern(4, 0)).code(), StatusCode::kFenced);
  EXPECT_EQ(ep.state(), EndpointState::kFenced);
  ASSERT_TRUE(ep.Reconnect().ok());
  EXPECT_EQ(ep.WriteEpoch(2).code(), StatusCode::kStaleEpoch);
  server.Stop();
}

TEST(SocketTransportTest, SilentPeerTimesOut) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  ASSERT_EQ(::listen(fd, 4), 0);
  socklen_t len = sizeof addr;
  getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  SocketEndpoint ep("127.0.0.1", ntohs(addr.sin_port), 1, std::chrono::milliseconds(150));
  auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(ep.Reconnect().code(), StatusCode::kTimeout);
  EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(140));
  EXPECT_EQ(ep.state(), EndpointState::kClosed);
  ::close(fd);
}

TEST(SocketTransportTest, ServerStoppedGivesError) {
  PersistenceRegion region(4096);
  auto server = std::make_unique<BackupServer>(&region);
  ASSERT_TRUE(server->Listen().ok());
  server->Start();
  SocketEndpoint ep("127.0.0.1", server->port(), 1, std::chrono::milliseconds(300));
  ASSERT_TRUE(ep.Reconnect().ok());
  server.reset();
  EXPECT_FALSE(ep.WriteAndForce(0, Pattern(8, 1)).ok());
  EXPECT_NE(ep.state(), EndpointState::kConnected);
}

// The backup runs in a separate process on a file-backed region and is
// killed with SIGKILL right after acknowledging; the file must hold the data.
TEST(SocketTransportTest, AckedBytesSurviveBackupProcessKill) {
  auto path = std::filesystem::temp_directory_path() / ("pmlog_backup_" + std::to_string(getpid()) + ".img");
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".dirty");
  int ports[2];
  ASSERT_EQ(pipe(ports), 0);
  pid_t child = fork();
  ASSERT_GE(child, 0);
  if (child == 0) {
    auto region = PersistenceRegion::OpenBacked(path.string(), 1 << 16);
    if (!region.ok()) _exit(3);
    BackupServer server(&*region);
    if (!server.Listen().ok()) _exit(4);
    uint16_t port = server.port();
    if (write(ports[1], &port, sizeof port) != sizeof port) _exit(5);
    server.Serve();
    _exit(0);
  }
  uint16_t port = 0;
  ASSERT_EQ(read(ports[0], &port, sizeof port), static_cast<ssize_t>(sizeof port));
  SocketEndpoint ep("127.0.0.1", port, 1, std::chrono::milliseconds(2000));
  ASSERT_TRUE(ep.Reconnect().ok());
  auto data = Pattern(5000, 12);
  ASSERT_TRUE(ep.WriteAndForce(777, data).ok());
  kill(child, SIGKILL);
  int st = 0;
  waitpid(child, &st, 0);
  EXPECT_TRUE(WIFSIGNALED(st));

  auto reloaded = PersistenceRegion::OpenBacked(path.string(), 1 << 16);
  ASSERT_TRUE(reloaded.ok());
  EXPECT_EQ(*reloaded->Read(777, 5000), data);
  close(ports[0]);
  close(ports[1]);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".dirty");
}

}  // namespace
}  // namespace pmlog::transport
