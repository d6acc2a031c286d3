#include "hopcroft_karp.hpp"

#include <limits>
#include <queue>

namespace matchmarket {

BipartiteMatching hopcroft_karp(std::size_t n_right,
                                const std::vector<std::vector<std::int32_t>>& adjacency) {
  const std::size_t n_left = adjacency.size();
  constexpr int kInf = std::numeric_limits<int>::max();

  BipartiteMatching m;
  m.left_partner.assign(n_left, kUnmatched);
  m.right_partner.assign(n_right, kUnmatched);

  std::vector<int> layer(n_left);
  std::vector<std::size_t> cursor(n_left);
  std::vector<std::int32_t> stack;

  for (;;) {
    // BFS from free left vertices builds the layered graph.
    std::queue<std::int32_t> frontier;
    for (std::size_t l = 0; l < n_left; ++l) {
      if (m.left_partner[l] == kUnmatched) {
        layer[l] = 0;
        frontier.push(static_cast<std::int32_t>(l));
      } else {
        layer[l] = kInf;
      }
    }
    int free_layer = kInf;
    while (!frontier.empty()) {
      const std::int32_t l = frontier.front();
      frontier.pop();
      if (layer[l] >= free_layer) continue;
      for (std::int32_t r : adjacency[l]) {
        const std::int32_t next = m.right_partner[r];
        if (next == kUnmatched) {
          if (free_layer == kInf) free_layer = layer[l] + 1;
        } else if (layer[next] == kInf) {
          layer[next] = layer[l] + 1;
          frontier.push(next);
        }
      }
    }
    if (free_layer == kInf) break;

    // Iterative DFS along the layers; each success flips one augmenting path.
    std::fill(cursor.begin(), cursor.end(), 0);
    std::size_t augmented = 0;
    for (std::size_t root = 0; root < n_left; ++root) {
      if (m.left_partner[root] != kUnmatched) continue;
      stack.assign(1, static_cast<std::int32_t>(root));
      while (!stack.empty()) {
        const std::int32_t l = stack.back();
        bool advanced = false;
        while (cursor[l] < adjacency[l].size()) {
          const std::int32_t r = adjacency[l][cursor[l]];
          const std::int32_t next = m.right_partner[r];
          if (next == kUnmatched) {
            if (layer[l] + 1 == free_layer) {
              // Augment along the stack: each left vertex takes the right
              // vertex its cursor currently points to.
              for (std::int32_t v : stack) {
                const std::int32_t rv = adjacency[v][cursor[v]];
                m.left_partner[v] = rv;
                m.right_partner[rv] = v;
              }
              ++augmented;
              stack.clear();
              advanced = true;
              break;
            }
          } else if (layer[next] == layer[l] + 1) {
            stack.push_back(next);
            advanced = true;
            break;
          }
          ++cursor[l];
        }
        if (stack.empty()) break;
        if (!advanced) {
          // Dead end: drop l from this phase and advance the parent.
          layer[l] = kInf;
          stack.pop_back();
          if (!stack.empty()) ++cursor[stack.back()];
        }
      }
    }
    if (augmented == 0) break;
    m.size += augmented;
  }
  return m;
}

}  // namespace matchmarket
