#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "pmlog/bytes.h"

namespace pmlog::kernels {

enum class DiffImpl {
  kScalar,
  kAvx2,
  kNeon,
};

std::string_view DiffImplName(DiffImpl impl);
std::vector<DiffImpl> AvailableDiffImpls();
DiffImpl ActiveDiffImpl();

// Compares two equally sized images line by line and appends the index of
// every line whose bytes differ. A trailing partial line is compared too.
void FindDifferingLines(ByteView a, ByteView b, size_t line_size, std::vector<uint64_t>* out);
void FindDifferingLinesWith(DiffImpl impl, ByteView a, ByteView b, size_t line_size,
                            std::vector<uint64_t>* out);

// Number of differing lines; 0 means the images are byte-identical.
size_t CountDifferingLines(ByteView a, ByteView b, size_t line_size);

inline bool ImagesEqual(ByteView a, ByteView b) {
  return a.size() == b.size() && CountDifferingLines(a, b, 64) == 0;
}

}  // namespace pmlog::kernels
