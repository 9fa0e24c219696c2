#include <cassert>

#include "kernels_internal.h"
#include "pmlog/kernels/cpu.h"
#include "pmlog/kernels/crc32.h"
#include "pmlog/kernels/line_diff.h"

namespace pmlog::kernels {

namespace {

Crc32Impl PickCrc32() {
  const auto& f = DetectCpu();
  if (f.pclmul) return Crc32Impl::kPclmul;
  if (f.arm_crc) return Crc32Impl::kArmCrc;
  return Crc32Impl::kScalar;
}

DiffImpl PickDiff() {
  const auto& f = DetectCpu();
  if (f.avx2) return DiffImpl::kAvx2;
  if (f.neon) return DiffImpl::kNeon;
  return DiffImpl::kScalar;
}

uint32_t RunCrc(Crc32Impl impl, uint32_t state, const uint8_t* p, size_t n) {
  switch (impl) {
#if PMLOG_X86
    case Crc32Impl::kPclmul:
      return internal::Crc32Pclmul(state, p, n);
#endif
#if PMLOG_ARM64
    case Crc32Impl::kArmCrc:
      return internal::Crc32ArmCrc(state, p, n);
#endif
    default:
      return internal::Crc32Scalar(state, p, n);
  }
}

}  // namespace

std::string_view Crc32ImplName(Crc32Impl impl) {
  switch (impl) {
    case Crc32Impl::kScalar:
      return "scalar";
    case Crc32Impl::kPclmul:
      return "pclmul";
    case Crc32Impl::kArmCrc:
      return "armv8-crc";
  }
  return "unknown";
}

std::vector<Crc32Impl> AvailableCrc32Impls() {
  std::vector<Crc32Impl> impls{Crc32Impl::kScalar};
  const auto& f = DetectCpu();
#if PMLOG_X86
  if (f.pclmul) impls.push_back(Crc32Impl::kPclmul);
#endif
#if PMLOG_ARM64
  if (f.arm_crc) impls.push_back(Crc32Impl::kArmCrc);
#endif
  (void)f;
  return impls;
}

Crc32Impl ActiveCrc32Impl() {
  static const Crc32Impl impl = PickCrc32();
  return impl;
}

uint32_t Crc32ExtendWith(Crc32Impl impl, uint32_t crc, ByteView data) {
  if (data.empty()) return crc;
  return ~RunCrc(impl, ~crc, data.data(), data.size());
}

uint32_t Crc32Extend(uint32_t crc, ByteView data) { return Crc32ExtendWith(ActiveCrc32Impl(), crc, data); }

std::string_view DiffImplName(DiffImpl impl) {
  switch (impl) {
    case DiffImpl::kScalar:
      return "scalar";
    case DiffImpl::kAvx2:
      return "avx2";
    case DiffImpl::kNeon:
      return "neon";
  }
  return "unknown";
}

std::vector<DiffImpl> AvailableDiffImpls() {
  std::vector<DiffImpl> impls{DiffImpl::kScalar};
  const auto& f = DetectCpu();
#if PMLOG_X86
  if (f.avx2) impls.push_back(DiffImpl::kAvx2);
#endif
#if PMLOG_ARM64
  if (f.neon) impls.push_back(DiffImpl::kNeon);
#endif
  (void)f;
  return impls;
}

DiffImpl ActiveDiffImpl() {
  static const DiffImpl impl = PickDiff();
  return impl;
}

void FindDifferingLinesWith(DiffImpl impl, ByteView a, ByteView b, size_t line_size,
                            std::vector<uint64_t>* out) {
  assert(a.size() == b.size());
  assert(line_size > 0);
  switch (impl) {
#if PMLOG_X86
    case DiffImpl::kAvx2:
      internal::DiffAvx2(a.data(), b.data(), a.size(), line_size, out);
      return;
#endif
#if PMLOG_ARM64
    case DiffImpl::kNeon:
      internal::DiffNeon(a.data(), b.data(), a.size(), line_size, out);
      return;
#endif
    default:
      internal::DiffScalar(a.data(), b.data(), a.size(), line_size, out);
  }
}

void FindDifferingLines(ByteView a, ByteView b, size_t line_size, std::vector<uint64_t>* out) {
  FindDifferingLinesWith(ActiveDiffImpl(), a, b, line_size, out);
}

size_t CountDifferingLines(ByteView a, ByteView b, size_t line_size) {
  std::vector<uint64_t> lines;
  FindDifferingLines(a, b, line_size, &lines);
  return lines.size();
}

}  // namespace pmlog::kernels
