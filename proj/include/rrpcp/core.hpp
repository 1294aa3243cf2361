#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace rrpcp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Sorted, duplicate-free set of 0-based coordinate indices.
using IndexSet = std::vector<int>;

inline void sort_unique(IndexSet& s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
}

inline bool contains(const IndexSet& s, int i) {
  return std::binary_search(s.begin(), s.end(), i);
}

inline bool disjoint(const IndexSet& a, const IndexSet& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib)
      ++ia;
    else if (*ib < *ia)
      ++ib;
    else
      return false;
  }
  return true;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic per-trial seed stream: trial i of a run never collides with
/// trial j, and the mapping is stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 1));
}

using Rng = std::mt19937_64;

}  // namespace rrpcp
