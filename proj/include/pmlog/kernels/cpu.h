#pragma once

#include <string_view>

namespace pmlog::kernels {

struct CpuFeatures {
  bool sse41 = false;
  bool pclmul = false;
  bool avx2 = false;
  bool arm_crc = false;
  bool neon = false;
};

// Probed once; PMLOG_KERNELS=scalar in the environment masks every SIMD
// feature so the scalar kernels can be exercised in production builds.
const CpuFeatures& DetectCpu();

std::string_view CpuSummary();

}  // namespace pmlog::kernels
