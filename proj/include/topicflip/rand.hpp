#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace topicflip {

/// FNV-1a 64-bit hash. Used for deterministic stream derivation and for
/// content-addressing run directories; stable across platforms.
inline uint64_t fnv1a(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a_u64(uint64_t value, uint64_t h = 0xcbf29ce484222325ULL) {
  for (int i = 0; i < 8; ++i) {
    h ^= (value >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent seed from a master seed and a purpose tag.
/// Every consumer of randomness pulls its own stream, so adding or
/// reordering consumers never perturbs unrelated results.
inline uint64_t derive_seed(uint64_t master, std::string_view tag) {
  return fnv1a(tag, fnv1a_u64(master));
}

inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index) {
  return fnv1a_u64(index, derive_seed(master, tag));
}

inline std::mt19937_64 rng_stream(uint64_t master, std::string_view tag) {
  return std::mt19937_64(derive_seed(master, tag));
}

inline std::mt19937_64 rng_stream(uint64_t master, std::string_view tag, uint64_t index) {
  return std::mt19937_64(derive_seed(master, tag, index));
}

}  // namespace topicflip
