#include "pmlog/pmem/region.h"

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <numeric>
#include <random>
#include <thread>

#include "oracles/crash_oracle.h"

namespace pmlog::pmem {
namespace {

using pmlog::testing::AllSubsets;
using pmlog::testing::ExpectedAfterCrash;

Bytes Pattern(size_t n, uint8_t seed) {
  Bytes b(n);
  for (size_t i = 0; i < n; ++i) b[i] = static_cast<uint8_t>(seed + i * 7);
  return b;
}

TEST(RegionTest, CapacityMustBeLineMultiple) {
  EXPECT_THROW(PersistenceRegion(100), std::invalid_argument);
  PersistenceRegion r(4096);
  EXPECT_EQ(r.line_count(), 64u);
}

TEST(RegionTest, StoreOutOfBounds) {
  PersistenceRegion r(256);
  EXPECT_EQ(r.Store(250, Pattern(8, 1)).code(), StatusCode::kOutOfRange);
  EXPECT_EQ(r.Persist(0, 257).code(), StatusCode::kOutOfRange);
  EXPECT_EQ(r.Read(256, 1).status().code(), StatusCode::kOutOfRange);
  EXPECT_TRUE(r.DirtyLines().empty());
}

TEST(RegionTest, EmptyStoreIsNoop) {
  PersistenceRegion r(256);
  ASSERT_TRUE(r.Store(10, {}).ok());
  EXPECT_TRUE(r.DirtyLines().empty());
  EXPECT_EQ(r.event_count(), 0u);
}

TEST(RegionTest, ReadAfterStoreRoundTrips) {
  PersistenceRegion r(512);
  auto data = Pattern(100, 3);
  ASSERT_TRUE(r.Store(37, data).ok());
  auto got = r.Read(37, 100);
  ASSERT_TRUE(got.ok());
  EXPECT_EQ(*got, data);
  EXPECT_TRUE(r.CheckInvariants());
}

TEST(RegionTest, StorePersistCrashKeepsData) {
  PersistenceRegion r(512);
  auto data = Pattern(64, 9);
  ASSERT_TRUE(r.Store(64, data).ok());
  ASSERT_TRUE(r.Persist(64, 64).ok());
  auto crashed = r.SimulateCrash(FaultPlan::DropAll());
  EXPECT_EQ(*crashed.Read(64, 64), data);
  EXPECT_TRUE(crashed.DirtyLines().empty());
}

TEST(RegionTest, PersistOnCleanRangeIsNoop) {
  PersistenceRegion r(512);
  ASSERT_TRUE(r.Store(0, Pattern(64, 1)).ok());
  ASSERT_TRUE(r.Persist(0, 64).ok());
  Bytes vol(r.volatile_image().begin(), r.volatile_image().end());
  Bytes per(r.persistent_image().begin(), r.persistent_image().end());
  ASSERT_TRUE(r.Persist(0, 512).ok());
  EXPECT_EQ(Bytes(r.volatile_image().begin(), r.volatile_image().end()), vol);
  EXPECT_EQ(Bytes(r.persistent_image().begin(), r.persistent_image().end()), per);
}

TEST(RegionTest, AlignedEightByteStoreNeverTears) {
  PersistenceRegion r(256);
  auto old_bytes = Pattern(8, 0x10);
  auto new_bytes = Pattern(8, 0x80);
  ASSERT_TRUE(r.Store(72, old_bytes).ok());
  ASSERT_TRUE(r.Persist(72, 8).ok());
  ASSERT_TRUE(r.Store(72, new_bytes).ok());
  for (auto plan : {FaultPlan::DropAll(), FaultPlan::KeepAll()}) {
    auto crashed = r.SimulateCrash(plan);
    auto got = *crashed.Read(72, 8);
    EXPECT_TRUE(got == old_bytes || got == new_bytes);
  }
  for (uint64_t seed = 0; seed < 32; ++seed) {
    auto got = *r.SimulateCrash(FaultPlan::Random(seed)).Read(72, 8);
    EXPECT_TRUE(got == old_bytes || got == new_bytes);
  }
}

// A 128-byte store at offset 32 touches lines 0, 1 and 2. Every survival
// subset must match the byte-level crash oracle.
TEST(RegionTest, MultiLineStoreTearsAtLineGranularity) {
  PersistenceRegion r(256);
  ASSERT_TRUE(r.Store(0, Pattern(256, 1)).ok());
  ASSERT_TRUE(r.Persist(0, 256).ok());
  Bytes media(r.persistent_image().begin(), r.persistent_image().end());
  ASSERT_TRUE(r.Store(32, Pattern(128, 200)).ok());
  Bytes cache(r.volatile_image().begin(), r.volatile_image().end());
  std::vector<uint64_t> dirty = r.DirtyLines();
  ASSERT_EQ(dirty, (std::vector<uint64_t>{0, 1, 2}));
  for (const auto& keep : AllSubsets(dirty)) {
    auto crashed = r.SimulateCrash(FaultPlan::KeepLines({keep.begin(), keep.end()}));
    auto expected = ExpectedAfterCrash(media, cache, {dirty.begin(), dirty.end()}, keep, 64);
    EXPECT_EQ(Bytes(crashed.persistent_image().begin(), crashed.persistent_image().end()), expected);
    EXPECT_EQ(*crashed.Read(0, 256), expected);
  }
  // Dropping only the middle line: new bytes on lines 0 and 2, old on line 1.
  auto crashed = r.SimulateCrash(FaultPlan::KeepLines({0, 2}));
  auto got = *crashed.Read(0, 256);
  EXPECT_TRUE(std::equal(got.begin() + 32, got.begin() + 64, cache.begin() + 32));
  EXPECT_TRUE(std::equal(got.begin() + 64, got.begin() + 128, media.begin() + 64));
  EXPECT_TRUE(std::equal(got.begin() + 128, got.begin() + 160, cache.begin() + 128));
}

TEST(RegionTest, PersistIsAFenceForItsRangeOnly) {
  PersistenceRegion r(256);
  auto a = Pattern(64, 1);
  auto b = Pattern(64, 2);
  ASSERT_TRUE(r.Store(0, a).ok());
  ASSERT_TRUE(r.Store(128, b).ok());
  ASSERT_TRUE(r.Persist(0, 64).ok());
  auto crashed = r.SimulateCrash(FaultPlan::DropAll());
  EXPECT_EQ(*crashed.Read(0, 64), a);
  EXPECT_EQ(*crashed.Read(128, 64), Bytes(64, 0));
}

TEST(RegionTest, CrashWithNoDirtyLinesIsIdentity) {
  PersistenceRegion r(256);
  ASSERT_TRUE(r.Store(0, Pattern(256, 4)).ok());
  ASSERT_TRUE(r.Persist(0, 256).ok());
  auto crashed = r.SimulateCrash(FaultPlan::DropAll());
  EXPECT_EQ(*crashed.Read(0, 256), *r.Read(0, 256));
}

TEST(RegionTest, DirtyLineWithoutSurvivalReverts) {
  PersistenceRegion r(128);
  ASSERT_TRUE(r.Store(0, Pattern(16, 1)).ok());
  ASSERT_TRUE(r.Persist(0, 16).ok());
  ASSERT_TRUE(r.Store(0, Pattern(16, 99)).ok());
  auto crashed = r.SimulateCrash(FaultPlan::KeepLines({}));
  EXPECT_EQ(*crashed.Read(0, 16), Pattern(16, 1));
}

TEST(RegionTest, SeededCrashIsDeterministic) {
  PersistenceRegion r(64 * 64);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) ASSERT_TRUE(r.Store(rng() % 4000, Pattern(50, static_cast<uint8_t>(i))).ok());
  auto a = r.SimulateCrash(FaultPlan::Random(1234));
  auto b = r.SimulateCrash(FaultPlan::Random(1234));
  EXPECT_EQ(*a.Read(0, r.capacity()), *b.Read(0, r.capacity()));
  auto c = r.SimulateCrash(FaultPlan::Random(1235));
  EXPECT_NE(*a.Read(0, r.capacity()), *c.Read(0, r.capacity()));
}

TEST(RegionTest, MediaErrorReadsCorruptedBytes) {
  PersistenceRegion r(256);
  auto data = Pattern(64, 1);
  ASSERT_TRUE(r.Store(64, data).ok());
  ASSERT_TRUE(r.Persist(64, 64).ok());
  FaultPlan plan;
  plan.media_errors.push_back({70, 5});
  plan.corruption_mask = 0x3C;
  auto crashed = r.SimulateCrash(plan);
  auto got = *crashed.Read(64, 64);
  for (size_t i = 0; i < 64; ++i) {
    uint8_t expect = (i >= 6 && i < 11) ? static_cast<uint8_t>(data[i] ^ 0x3C) : data[i];
    EXPECT_EQ(got[i], expect) << i;
  }
  // Live injection into a clean line is visible immediately.
  ASSERT_TRUE(r.InjectMediaError(64, 1).ok());
  EXPECT_EQ((*r.Read(64, 1))[0], static_cast<uint8_t>(data[0] ^ 0xFF));
  EXPECT_TRUE(r.CheckInvariants());
}

TEST(RegionTest, CrashPointCapturesStateAfterEvent) {
  PersistenceRegion r(256);
  uint64_t captured = 0;
  r.ArmCrashPoint(2, [&](uint64_t seq) { captured = seq; });
  ASSERT_TRUE(r.Store(0, Pattern(8, 1)).ok());   // event 1
  ASSERT_TRUE(r.Persist(0, 8).ok());             // event 2
  ASSERT_TRUE(r.Store(64, Pattern(8, 2)).ok());  // event 3
  EXPECT_EQ(captured, 2u);
  auto snap = r.TakeCrashSnapshot();
  ASSERT_TRUE(snap.has_value());
  EXPECT_TRUE(snap->dirty_lines.empty());
  auto crashed = snap->Materialize(FaultPlan::KeepAll());
  EXPECT_EQ(*crashed.Read(0, 8), Pattern(8, 1));
  EXPECT_EQ(*crashed.Read(64, 8), Bytes(8, 0));
}

TEST(RegionTest, TraceRecordsEvents) {
  PersistenceRegion r(256);
  r.EnableTrace(true);
  ASSERT_TRUE(r.Store(8, Pattern(4, 0)).ok());
  ASSERT_TRUE(r.Persist(0, 64).ok());
  auto trace = r.TakeTrace();
  ASSERT_EQ(trace.size(), 2u);
  EXPECT_EQ(trace[0].kind, EventKind::kStore);
  EXPECT_EQ(trace[0].offset, 8u);
  EXPECT_EQ(trace[1].kind, EventKind::kPersist);
}

TEST(RegionTest, EvictionPersistsByLuckOnlyWhenEnabled) {
  PersistenceRegion r(64 * 128);
  for (uint64_t line = 0; line < 128; ++line) ASSERT_TRUE(r.Store(line * 64, Pattern(64, 1)).ok());
  EXPECT_EQ(r.DirtyLines().size(), 128u);
  PersistenceRegion e(64 * 128);
  e.SetEviction({0.5, 42});
  for (uint64_t line = 0; line < 128; ++line) ASSERT_TRUE(e.Store(line * 64, Pattern(64, 1)).ok());
  EXPECT_LT(e.DirtyLines().size(), 128u);
  EXPECT_TRUE(e.CheckInvariants());
}

TEST(RegionTest, ConcurrentStoresToSharedLines) {
  PersistenceRegion r(64 * 64);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&r, t] {
      for (int i = 0; i < 500; ++i) {
        uint64_t off = static_cast<uint64_t>((i % 64) * 64 + t * 8);
        ASSERT_TRUE(r.Store(off, Pattern(8, static_cast<uint8_t>(t))).ok());
        if (i % 3 == 0) ASSERT_TRUE(r.Persist(off, 8).ok());
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_TRUE(r.CheckInvariants());
  for (int line = 0; line < 64; ++line) {
    for (int t = 0; t < 8; ++t) EXPECT_EQ(*r.Read(line * 64 + t * 8, 8), Pattern(8, static_cast<uint8_t>(t)));
  }
}

TEST(RegionTest, BackedRegionSurvivesReopen) {
  auto path = (std::filesystem::temp_directory_path() / ("pmlog_region_" + std::to_string(::getpid()))).string();
  std::filesystem::remove(path);
  {
    auto r = PersistenceRegion::OpenBacked(path, 1024);
    ASSERT_TRUE(r.ok()) << r.status().ToString();
    ASSERT_TRUE(r->Store(0, Pattern(64, 5)).ok());
    ASSERT_TRUE(r->Persist(0, 64).ok());
    ASSERT_TRUE(r->Store(128, Pattern(64, 6)).ok());  // never persisted
    ASSERT_TRUE(r->SyncMetadata().ok());
  }
  EXPECT_TRUE(std::filesystem::exists(path + ".dirty"));
  auto again = PersistenceRegion::OpenBacked(path, 1024);
  ASSERT_TRUE(again.ok());
  EXPECT_EQ(*again->Read(0, 64), Pattern(64, 5));
  EXPECT_EQ(*again->Read(128, 64), Bytes(64, 0));
  EXPECT_FALSE(PersistenceRegion::OpenBacked(path, 2048).ok());
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".dirty");
}

}  // namespace
}  // namespace pmlog::pmem
