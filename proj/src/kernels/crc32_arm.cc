#include "kernels_internal.h"

#if PMLOG_ARM64

#include <arm_acle.h>

#include <cstring>

namespace pmlog::kernels::internal {

// The ARMv8 crc32{b,h,w,x} instructions implement the ISO-HDLC polynomial
// (crc32c* are the Castagnoli variants).
__attribute__((target("+crc"))) uint32_t Crc32ArmCrc(uint32_t state, const uint8_t* p, size_t n) {
  while (n >= 8) {
    uint64_t v;
    std::memcpy(&v, p, 8);
    state = __crc32d(state, v);
    p += 8;
    n -= 8;
  }
  while (n-- > 0) state = __crc32b(state, *p++);
  return state;
}

}  // namespace pmlog::kernels::internal

#endif  // PMLOG_ARM64
