#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <vector>

namespace pmlog::testing {

// Byte-by-byte model of a crash: a byte keeps its new (volatile) value iff
// its cache line was dirty and survives; otherwise it shows the media value.
inline std::vector<uint8_t> ExpectedAfterCrash(const std::vector<uint8_t>& media,
                                               const std::vector<uint8_t>& cache,
                                               const std::set<uint64_t>& dirty,
                                               const std::set<uint64_t>& surviving, size_t line) {
  std::vector<uint8_t> out(media.size());
  for (size_t i = 0; i < media.size(); ++i) {
    uint64_t l = i / line;
    out[i] = (dirty.count(l) && surviving.count(l)) ? cache[i] : media[i];
  }
  return out;
}

// All subsets of `items`, used to enumerate which dirty lines survive.
template <typename T>
std::vector<std::set<T>> AllSubsets(const std::vector<T>& items) {
  std::vector<std::set<T>> out;
  for (uint64_t mask = 0; mask < (uint64_t{1} << items.size()); ++mask) {
    std::set<T> s;
    for (size_t i = 0; i < items.size(); ++i) {
      if (mask & (uint64_t{1} << i)) s.insert(items[i]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pmlog::testing
