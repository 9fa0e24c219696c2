#pragma once

#include <cstddef>
#include <cstdint>

namespace pmlog::testing {

// Table-free, bit-at-a-time CRC-32/ISO-HDLC straight from the polynomial
// definition. Deliberately shares nothing with the library kernels.
inline uint32_t BitwiseCrc32(const uint8_t* p, size_t n) {
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) {
    crc ^= p[i];
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

}  // namespace pmlog::testing
