#include <cstring>

#include "kernels_internal.h"

#if PMLOG_ARM64

#include <arm_neon.h>

namespace pmlog::kernels::internal {

void DiffNeon(const uint8_t* a, const uint8_t* b, size_t n, size_t line, std::vector<uint64_t>* out) {
  uint64_t idx = 0;
  for (size_t off = 0; off < n; off += line, ++idx) {
    size_t len = n - off < line ? n - off : line;
    size_t i = 0;
    bool differs = false;
    for (; i + 16 <= len; i += 16) {
      uint8x16_t eq = vceqq_u8(vld1q_u8(a + off + i), vld1q_u8(b + off + i));
      if (vminvq_u8(eq) != 0xFF) {
        differs = true;
        break;
      }
    }
    if (!differs && i < len) differs = std::memcmp(a + off + i, b + off + i, len - i) != 0;
    if (differs) out->push_back(idx);
  }
}

}  // namespace pmlog::kernels::internal

#endif  // PMLOG_ARM64
