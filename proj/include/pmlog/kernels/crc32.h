#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "pmlog/bytes.h"

namespace pmlog::kernels {

// CRC-32/ISO-HDLC: polynomial 0x04C11DB7 (reflected 0xEDB88320),
// init 0xFFFFFFFF, xorout 0xFFFFFFFF. Check value for "123456789" is 0xCBF43926.
enum class Crc32Impl {
  kScalar,   // slicing-by-8 tables
  kPclmul,   // x86 carry-less multiply folding
  kArmCrc,   // ARMv8 CRC32 extension
};

std::string_view Crc32ImplName(Crc32Impl impl);

// Implementations usable on the running CPU; kScalar is always first.
std::vector<Crc32Impl> AvailableCrc32Impls();
Crc32Impl ActiveCrc32Impl();

// Extends a finished CRC value with more bytes: Crc32(a ++ b) ==
// Crc32Extend(Crc32(a), b).
uint32_t Crc32Extend(uint32_t crc, ByteView data);
uint32_t Crc32ExtendWith(Crc32Impl impl, uint32_t crc, ByteView data);

inline uint32_t Crc32(ByteView data) { return Crc32Extend(0, data); }
inline uint32_t Crc32(std::string_view s) { return Crc32(AsBytes(s)); }

}  // namespace pmlog::kernels
