#include "pmlog/kernels/cpu.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "kernels_internal.h"

#if PMLOG_ARM64 && defined(__linux__)
#include <asm/hwcap.h>
#include <sys/auxv.h>
#endif

namespace pmlog::kernels {

namespace {

CpuFeatures Probe() {
  CpuFeatures f;
  const char* env = std::getenv("PMLOG_KERNELS");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return f;
#if PMLOG_X86 && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  f.sse41 = __builtin_cpu_supports("sse4.1");
  f.pclmul = __builtin_cpu_supports("pclmul") && f.sse41;
  f.avx2 = __builtin_cpu_supports("avx2");
#endif
#if PMLOG_ARM64
  f.neon = true;
#if defined(__linux__) && defined(HWCAP_CRC32)
  f.arm_crc = (getauxval(AT_HWCAP) & HWCAP_CRC32) != 0;
#endif
#endif
  return f;
}

}  // namespace

const CpuFeatures& DetectCpu() {
  static const CpuFeatures features = Probe();
  return features;
}

std::string_view CpuSummary() {
  static const std::string summary = [] {
    const auto& f = DetectCpu();
    std::string s;
    auto add = [&](bool on, const char* name) {
      if (!on) return;
      if (!s.empty()) s += ',';
      s += name;
    };
    add(f.sse41, "sse4.1");
    add(f.pclmul, "pclmul");
    add(f.avx2, "avx2");
    add(f.neon, "neon");
    add(f.arm_crc, "crc32");
    return s.empty() ? std::string("scalar") : s;
  }();
  return summary;
}

}  // namespace pmlog::kernels
