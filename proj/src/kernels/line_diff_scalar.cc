#include <cstring>

#include "kernels_internal.h"

namespace pmlog::kernels::internal {

void DiffScalar(const uint8_t* a, const uint8_t* b, size_t n, size_t line, std::vector<uint64_t>* out) {
  uint64_t idx = 0;
  for (size_t off = 0; off < n; off += line, ++idx) {
    size_t len = n - off < line ? n - off : line;
    if (std::memcmp(a + off, b + off, len) != 0) out->push_back(idx);
  }
}

}  // namespace pmlog::kernels::internal
