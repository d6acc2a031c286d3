#pragma once

#include <cstdint>
#include <vector>

namespace matchmarket {

inline constexpr std::int32_t kUnmatched = -1;

struct BipartiteMatching {
  std::vector<std::int32_t> left_partner;   // index into right side or kUnmatched
  std::vector<std::int32_t> right_partner;  // index into left side or kUnmatched
  std::size_t size = 0;
};

/// Maximum-cardinality bipartite matching (Hopcroft-Karp). `adjacency[l]`
/// lists the right vertices compatible with left vertex l.
BipartiteMatching hopcroft_karp(std::size_t n_right,
                                const std::vector<std::vector<std::int32_t>>& adjacency);

}  // namespace matchmarket
