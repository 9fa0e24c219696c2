#include <cstring>

#include "kernels_internal.h"

#if PMLOG_X86

#include <immintrin.h>

namespace pmlog::kernels::internal {

__attribute__((target("avx2"))) void DiffAvx2(const uint8_t* a, const uint8_t* b, size_t n, size_t line,
                                              std::vector<uint64_t>* out) {
  uint64_t idx = 0;
  for (size_t off = 0; off < n; off += line, ++idx) {
    size_t len = n - off < line ? n - off : line;
    size_t i = 0;
    bool differs = false;
    for (; i + 32 <= len; i += 32) {
      __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + off + i));
      __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + off + i));
      if (static_cast<uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(va, vb))) != 0xFFFFFFFFu) {
        differs = true;
        break;
      }
    }
    if (!differs && i < len) differs = std::memcmp(a + off + i, b + off + i, len - i) != 0;
    if (differs) out->push_back(idx);
  }
}

}  // namespace pmlog::kernels::internal

#endif  // PMLOG_X86
