#pragma once

// Deterministic seed derivation so per-stock and per-tree work can fan out
// without sharing a generator.

#include <cstdint>
#include <string_view>

namespace confuse::seeding {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Stream member i of the family identified by key.
inline std::uint64_t derive(std::uint64_t key, std::uint64_t i) {
    return splitmix64(key ^ splitmix64(i));
}

}  // namespace confuse::seeding
