#include <gtest/gtest.h>

#include "oracles/crash_enum.h"
#include "oracles/crc_oracle.h"
#include "pmlog/primitives/atomic_cell.h"
#include "pmlog/primitives/integrity_slot.h"
#include "pmlog/primitives/persist_sink.h"

namespace pmlog::primitives {
namespace {

using pmem::FaultPlan;
using pmem::PersistenceRegion;
using pmlog::testing::EnumerateCrashStates;

Bytes Pattern(size_t n, uint8_t seed) {
  Bytes b(n);
  for (size_t i = 0; i < n; ++i) b[i] = static_cast<uint8_t>(seed * 31 + i * 13 + 1);
  return b;
}

// ---- integrity slot ----

TEST(IntegritySlotTest, RoundTripWithMeta) {
  PersistenceRegion r(1024);
  LocalPersistSink sink(r);
  IntegritySlot slot(r, 64, 200);
  auto d = Pattern(150, 3);
  ASSERT_TRUE(slot.ReliableWrite(d, sink, 0xABCD).ok());
  uint32_t meta = 0;
  auto got = slot.ReliableRead(&meta);
  ASSERT_TRUE(got.ok()) << got.status().ToString();
  EXPECT_EQ(*got, d);
  EXPECT_EQ(meta, 0xABCDu);

  // survives a crash that drops everything unpersisted
  auto crashed = r.SimulateCrash(FaultPlan::DropAll());
  IntegritySlot again(crashed, 64, 200);
  EXPECT_EQ(*again.ReliableRead(), d);
}

TEST(IntegritySlotTest, LayoutIsBitExact) {
  PersistenceRegion r(256);
  LocalPersistSink sink(r);
  IntegritySlot slot(r, 0, 32);
  auto d = ToBytes("hello");
  ASSERT_TRUE(slot.ReliableWrite(d, sink, 7).ok());
  auto img = r.persistent_image();
  EXPECT_EQ(DecodeFixed32(&img[0]), 5u);
  EXPECT_EQ(DecodeFixed32(&img[4]), 7u);
  EXPECT_EQ(DecodeFixed32(&img[8]), pmlog::testing::BitwiseCrc32(&img[0], 8));
  EXPECT_EQ(std::string(img.begin() + 12, img.begin() + 17), "hello");
  EXPECT_EQ(DecodeFixed32(&img[17]), pmlog::testing::BitwiseCrc32(d.data(), d.size()));
}

TEST(IntegritySlotTest, ExactlyOnePersistCall) {
  PersistenceRegion r(1024);
  LocalPersistSink local(r);
  CountingSink sink(local);
  IntegritySlot slot(r, 0, 500);
  ASSERT_TRUE(slot.ReliableWrite(Pattern(300, 1), sink).ok());
  EXPECT_EQ(sink.calls(), 1);
  ASSERT_EQ(sink.last_ranges().size(), 1u);
  EXPECT_EQ(sink.last_ranges()[0], (ByteRange{0, 12 + 300 + 4}));
}

TEST(IntegritySlotTest, FreshZeroSlotIsHeaderInvalid) {
  PersistenceRegion r(256);
  IntegritySlot slot(r, 0, 64);
  EXPECT_EQ(slot.ReliableRead().status().code(), StatusCode::kHeaderInvalid);
}

TEST(IntegritySlotTest, OversizedWriteRejected) {
  PersistenceRegion r(256);
  LocalPersistSink sink(r);
  IntegritySlot slot(r, 0, 16);
  EXPECT_EQ(slot.ReliableWrite(Pattern(17, 0), sink).code(), StatusCode::kInvalidArgument);
  EXPECT_TRUE(r.DirtyLines().empty());
}

TEST(IntegritySlotTest, SinkFailurePropagates) {
  PersistenceRegion r(256);
  LocalPersistSink local(r);
  CountingSink sink(local);
  sink.set_fail(true);
  IntegritySlot slot(r, 0, 16);
  EXPECT_EQ(slot.ReliableWrite(Pattern(8, 0), sink).code(), StatusCode::kTimeout);
}

TEST(IntegritySlotTest, DroppedChecksumLineIsIntegrityFailure) {
  PersistenceRegion r(512);
  // header + payload start on line 0, data_crc lands on line 1
  auto d = Pattern(100, 9);
  auto probe = r.Clone();
  LocalPersistSink probe_sink(probe);
  probe.ArmCrashPoint(3);  // after header, payload and trailer stores
  IntegritySlot ps(probe, 0, 100);
  ASSERT_TRUE(ps.ReliableWrite(d, probe_sink).ok());
  auto snap = probe.TakeCrashSnapshot();
  ASSERT_TRUE(snap.has_value());
  auto crashed = snap->Materialize(FaultPlan::KeepLines({0}));
  IntegritySlot cs(crashed, 0, 100);
  auto got = cs.ReliableRead();
  ASSERT_FALSE(got.ok());
  EXPECT_EQ(got.status().code(), StatusCode::kDataInvalid);
}

TEST(IntegritySlotTest, MediaErrorInPayloadIsDataCrcMismatch) {
  PersistenceRegion r(512);
  LocalPersistSink sink(r);
  IntegritySlot slot(r, 0, 100);
  ASSERT_TRUE(slot.ReliableWrite(Pattern(100, 2), sink).ok());
  ASSERT_TRUE(r.InjectMediaError(40, 1, 0x10).ok());
  EXPECT_EQ(slot.ReliableRead().status().code(), StatusCode::kDataInvalid);
}

TEST(IntegritySlotTest, MediaErrorInHeaderIsHeaderInvalid) {
  PersistenceRegion r(512);
  LocalPersistSink sink(r);
  IntegritySlot slot(r, 0, 100);
  ASSERT_TRUE(slot.ReliableWrite(Pattern(100, 2), sink).ok());
  ASSERT_TRUE(r.InjectMediaError(1, 1, 0x80).ok());
  EXPECT_EQ(slot.ReliableRead().status().code(), StatusCode::kHeaderInvalid);
}

struct SlotCase {
  IntegritySlot::HeaderCheck mode;
  uint64_t base;
  size_t old_len;  // 0: slot starts zeroed
  size_t new_len;
};

class SlotCrashEnum : public ::testing::TestWithParam<SlotCase> {};

TEST_P(SlotCrashEnum, NeverSilentlyWrong) {
  const auto c = GetParam();
  const uint32_t cap = 160;
  PersistenceRegion base(512);
  LocalPersistSink base_sink(base);
  Bytes old_data = Pattern(c.old_len, 4), new_data = Pattern(c.new_len, 5);
  bool had_old = c.old_len > 0;
  if (had_old) {
    IntegritySlot s(base, c.base, cap, c.mode, 42);
    ASSERT_TRUE(s.ReliableWrite(old_data, base_sink).ok());
  }

  size_t new_seen = 0, old_seen = 0, failures = 0;
  size_t last_point = 4;  // 3 stores + 1 persist
  auto stats = EnumerateCrashStates(
      base,
      [&](PersistenceRegion& reg) {
        LocalPersistSink sink(reg);
        IntegritySlot s(reg, c.base, cap, c.mode, 42);
        ASSERT_TRUE(s.ReliableWrite(new_data, sink).ok());
      },
      [&](PersistenceRegion& crashed, size_t point) {
        IntegritySlot s(crashed, c.base, cap, c.mode, 42);
        auto got = s.ReliableRead();
        if (point == last_point) {
          ASSERT_TRUE(got.ok());
          EXPECT_EQ(*got, new_data);
        }
        if (!got.ok()) {
          EXPECT_TRUE(got.status() == StatusCode::kHeaderInvalid || got.status() == StatusCode::kDataInvalid);
          ++failures;
          return;
        }
        if (*got == new_data) {
          ++new_seen;
        } else {
          ASSERT_TRUE(had_old) << "garbage returned at point " << point;
          ASSERT_EQ(*got, old_data) << "garbage returned at point " << point;
          ++old_seen;
        }
      });
  EXPECT_EQ(stats.points, 5u);
  EXPECT_GT(new_seen, 0u);
  EXPECT_GT(failures, 0u);
  if (had_old) EXPECT_GT(old_seen, 0u);
}

INSTANTIATE_TEST_SUITE_P(
    Slots, SlotCrashEnum,
    ::testing::Values(SlotCase{IntegritySlot::HeaderCheck::kCrc, 0, 0, 100},
                      SlotCase{IntegritySlot::HeaderCheck::kCrc, 0, 150, 100},
                      SlotCase{IntegritySlot::HeaderCheck::kCrc, 40, 60, 130},
                      SlotCase{IntegritySlot::HeaderCheck::kCrc, 60, 3, 3},
                      SlotCase{IntegritySlot::HeaderCheck::kExpectedValue, 0, 0, 100},
                      SlotCase{IntegritySlot::HeaderCheck::kExpectedValue, 0, 150, 100},
                      SlotCase{IntegritySlot::HeaderCheck::kExpectedValue, 40, 60, 130}));

// ---- atomic cell ----

constexpr uint32_t kCellSize = 72;  // buffer spans two lines

Bytes Versioned(uint64_t version) {
  Bytes b = Pattern(kCellSize, static_cast<uint8_t>(version));
  EncodeFixed64(b.data(), version);
  return b;
}

int NewerVersion(ByteView a, ByteView b) { return DecodeFixed64(a.data()) >= DecodeFixed64(b.data()) ? 0 : 1; }

AtomicCell MakeCell(PersistenceRegion& r, AtomicCell::IndexMode mode) {
  return AtomicCell(r, 128, kCellSize, mode, NewerVersion);
}

TEST(AtomicCellTest, LayoutIsolatesIndexLine) {
  PersistenceRegion r(1024);
  auto strict = MakeCell(r, AtomicCell::IndexMode::kPersistent);
  EXPECT_EQ(strict.index_offset(), 128u);
  EXPECT_EQ(strict.buffer_offset(0), 192u);
  EXPECT_EQ(strict.buffer_offset(1), 320u);
  EXPECT_EQ(strict.footprint(), 64u + 2 * 128u);
  auto vol = MakeCell(r, AtomicCell::IndexMode::kVolatile);
  EXPECT_EQ(vol.buffer_offset(0), 128u);
  EXPECT_EQ(vol.footprint(), 256u);
  EXPECT_THROW(AtomicCell(r, 0, 0, AtomicCell::IndexMode::kVolatile), std::invalid_argument);
}

class AtomicCellModes : public ::testing::TestWithParam<AtomicCell::IndexMode> {};

TEST_P(AtomicCellModes, WriteThenRead) {
  PersistenceRegion r(1024);
  LocalPersistSink sink(r);
  auto cell = MakeCell(r, GetParam());
  ASSERT_TRUE(cell.Format(Versioned(0), sink).ok());
  ASSERT_TRUE(cell.AtomicWrite(Versioned(1), sink).ok());
  EXPECT_EQ(*cell.AtomicRead(), Versioned(1));
  ASSERT_TRUE(cell.AtomicWrite(Versioned(2), sink).ok());
  EXPECT_EQ(*cell.AtomicRead(), Versioned(2));
  EXPECT_EQ(cell.AtomicWrite(Bytes(3), sink).code(), StatusCode::kInvalidArgument);

  auto crashed = r.SimulateCrash(FaultPlan::DropAll());
  auto reopened = MakeCell(crashed, GetParam());
  ASSERT_TRUE(reopened.Open().ok());
  EXPECT_EQ(*reopened.AtomicRead(), Versioned(2));
}

TEST_P(AtomicCellModes, PersistCallCount) {
  PersistenceRegion r(1024);
  LocalPersistSink local(r);
  CountingSink sink(local);
  auto cell = MakeCell(r, GetParam());
  ASSERT_TRUE(cell.Format(Versioned(0), sink).ok());
  int before = sink.calls();
  ASSERT_TRUE(cell.AtomicWrite(Versioned(1), sink).ok());
  EXPECT_EQ(sink.calls() - before, GetParam() == AtomicCell::IndexMode::kPersistent ? 2 : 1);
}

TEST_P(AtomicCellModes, CorruptCurrentBufferIsIntegrityFailure) {
  PersistenceRegion r(1024);
  LocalPersistSink sink(r);
  auto cell = MakeCell(r, GetParam());
  ASSERT_TRUE(cell.Format(Versioned(0), sink).ok());
  ASSERT_TRUE(cell.AtomicWrite(Versioned(1), sink).ok());
  ASSERT_TRUE(r.InjectMediaError(cell.buffer_offset(cell.index()) + 20, 1).ok());
  EXPECT_EQ(cell.AtomicRead().status().code(), StatusCode::kDataInvalid);
}

TEST_P(AtomicCellModes, BothBuffersCorruptIsUnrecoverable) {
  PersistenceRegion r(1024);
  LocalPersistSink sink(r);
  auto cell = MakeCell(r, GetParam());
  ASSERT_TRUE(cell.Format(Versioned(0), sink).ok());
  ASSERT_TRUE(cell.AtomicWrite(Versioned(1), sink).ok());
  ASSERT_TRUE(r.InjectMediaError(cell.buffer_offset(0) + 9, 1).ok());
  ASSERT_TRUE(r.InjectMediaError(cell.buffer_offset(1) + 9, 1).ok());
  EXPECT_EQ(cell.Open().code(), StatusCode::kUnrecoverable);
}

TEST_P(AtomicCellModes, FailedSinkKeepsPreviousValue) {
  PersistenceRegion r(1024);
  LocalPersistSink local(r);
  CountingSink sink(local);
  auto cell = MakeCell(r, GetParam());
  ASSERT_TRUE(cell.Format(Versioned(0), sink).ok());
  ASSERT_TRUE(cell.AtomicWrite(Versioned(1), sink).ok());
  sink.set_fail(true);
  EXPECT_FALSE(cell.AtomicWrite(Versioned(2), sink).ok());
  EXPECT_EQ(*cell.AtomicRead(), Versioned(1));
}

// Write A successfully, then write B and crash at every store/persist
// boundary with every subset of dirty lines surviving.
TEST_P(AtomicCellModes, CrashEnumerationYieldsOldOrNew) {
  const auto mode = GetParam();
  for (int prior_writes = 0; prior_writes < 2; ++prior_writes) {  // exercises both write directions
    PersistenceRegion base(1024);
    LocalPersistSink bs(base);
    auto cell = MakeCell(base, mode);
    ASSERT_TRUE(cell.Format(Versioned(0), bs).ok());
    uint64_t a = 1;
    for (int i = 0; i <= prior_writes; ++i, ++a) ASSERT_TRUE(cell.AtomicWrite(Versioned(a), bs).ok());
    const Bytes old_value = Versioned(a - 1), new_value = Versioned(a);

    // strict: 2 stores, persist, index store, persist. volatile: 2 stores, persist.
    const size_t buffer_durable = 3;
    const size_t write_done = mode == AtomicCell::IndexMode::kPersistent ? 5 : 3;
    size_t olds = 0, news = 0;
    auto stats = EnumerateCrashStates(
        base,
        [&](PersistenceRegion& reg) {
          LocalPersistSink s(reg);
          auto c = MakeCell(reg, mode);
          ASSERT_TRUE(c.Open().ok());
          ASSERT_TRUE(c.AtomicWrite(new_value, s).ok());
        },
        [&](PersistenceRegion& crashed, size_t point) {
          auto c = MakeCell(crashed, mode);
          ASSERT_TRUE(c.Open().ok()) << "point " << point;
          auto got = c.AtomicRead();
          ASSERT_TRUE(got.ok()) << "point " << point;
          if (*got == old_value) {
            ++olds;
            EXPECT_LT(point, write_done) << "completed write lost";
          } else {
            ASSERT_EQ(*got, new_value) << "point " << point;
            ++news;
            if (mode == AtomicCell::IndexMode::kPersistent) {
              EXPECT_GE(point, write_done - 1) << "new value visible before index flip";
            } else {
              EXPECT_GE(point, buffer_durable - 1);
            }
          }
        });
    EXPECT_EQ(stats.points, write_done + 1);
    EXPECT_GT(olds, 0u);
    EXPECT_GT(news, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, AtomicCellModes,
                         ::testing::Values(AtomicCell::IndexMode::kPersistent, AtomicCell::IndexMode::kVolatile),
                         [](const auto& info) {
                           return info.param == AtomicCell::IndexMode::kPersistent ? "Strict" : "VolatileIndex";
                         });

TEST(AtomicCellTest, VolatileIndexNeedsChooserForTwoValidBuffers) {
  PersistenceRegion r(1024);
  LocalPersistSink sink(r);
  AtomicCell cell(r, 0, kCellSize, AtomicCell::IndexMode::kVolatile);
  ASSERT_TRUE(cell.Format(Versioned(0), sink).ok());
  ASSERT_TRUE(cell.Open().ok());  // only buf[0] valid yet
  EXPECT_EQ(cell.index(), 0);
  ASSERT_TRUE(cell.AtomicWrite(Versioned(1), sink).ok());
  AtomicCell fresh(r, 0, kCellSize, AtomicCell::IndexMode::kVolatile);
  EXPECT_EQ(fresh.Open().code(), StatusCode::kWrongState);
}

}  // namespace
}  // namespace pmlog::primitives
