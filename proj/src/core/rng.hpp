#pragma once

#include <cstdint>
#include <random>

namespace matchmarket {

/// Independent randomness purposes. Each one gets its own engine so that,
/// e.g., recording extra snapshots never shifts the arrival stream.
enum class Stream : std::uint64_t {
  ArrivalsA = 1,
  ArrivalsB = 2,
  LifetimesA = 3,
  LifetimesB = 4,
  Coins = 5,
  TieBreak = 6,
};

/// Root seed plus replication index; together they name one trajectory.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(StreamKey key, Stream stream) noexcept {
  std::uint64_t h = splitmix64(key.seed);
  h = splitmix64(h ^ splitmix64(key.replication + 0x51ed270b27a3c5f1ULL));
  return splitmix64(h ^ static_cast<std::uint64_t>(stream));
}

inline std::mt19937_64 make_engine(StreamKey key, Stream stream) {
  std::seed_seq seq{derive_seed(key, stream), key.seed, key.replication,
                    static_cast<std::uint64_t>(stream)};
  return std::mt19937_64(seq);
}

/// Compatibility coin for the unordered pair (u_id, v_id): a counter-based
/// draw, so every policy run on the same realization sees the same edge set
/// regardless of evaluation order.
inline bool edge_coin(std::uint64_t coin_key, std::uint64_t u_id, std::uint64_t v_id,
                      double p) noexcept {
  const std::uint64_t h =
      splitmix64(coin_key ^ splitmix64(u_id * 0x9e3779b97f4a7c15ULL + splitmix64(v_id)));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < p;
}

}  // namespace matchmarket
