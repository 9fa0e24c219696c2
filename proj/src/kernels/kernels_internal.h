#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define PMLOG_X86 1
#else
#define PMLOG_X86 0
#endif

#if defined(__aarch64__) || defined(_M_ARM64)
#define PMLOG_ARM64 1
#else
#define PMLOG_ARM64 0
#endif

namespace pmlog::kernels::internal {

// All CRC entry points take and return the raw (pre-inverted) register.
uint32_t Crc32Scalar(uint32_t state, const uint8_t* p, size_t n);
#if PMLOG_X86
uint32_t Crc32Pclmul(uint32_t state, const uint8_t* p, size_t n);
#endif
#if PMLOG_ARM64
uint32_t Crc32ArmCrc(uint32_t state, const uint8_t* p, size_t n);
#endif

void DiffScalar(const uint8_t* a, const uint8_t* b, size_t n, size_t line, std::vector<uint64_t>* out);
#if PMLOG_X86
void DiffAvx2(const uint8_t* a, const uint8_t* b, size_t n, size_t line, std::vector<uint64_t>* out);
#endif
#if PMLOG_ARM64
void DiffNeon(const uint8_t* a, const uint8_t* b, size_t n, size_t line, std::vector<uint64_t>* out);
#endif

}  // namespace pmlog::kernels::internal
