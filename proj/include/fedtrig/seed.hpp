#pragma once

#include <cstdint>
#include <string_view>

namespace fedtrig {

// Hierarchical seeding: every random stream in an experiment is derived as
//   master XOR mix(purpose, round, client)
// so a stream depends only on what it is for, never on execution order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                                 std::uint64_t round = 0, std::uint64_t client = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : purpose) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  h = splitmix64(h ^ splitmix64(round + 0x51ed270b2a3f6c1dULL));
  h = splitmix64(h ^ splitmix64(client + 0x2545f4914f6cdd1dULL));
  return master ^ h;
}

}  // namespace fedtrig
