#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ddl {

// Uniform doubles built directly from raw engine output so streams are
// bit-identical across platforms (std::uniform_real_distribution is
// implementation-defined).
inline double uniform_unit(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(g);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives per-entity sub-seeds (image, view) from a run seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view key, std::uint64_t index = 0) {
    return splitmix64(base ^ splitmix64(fnv1a64(key) + index * 0x9e3779b97f4a7c15ULL));
}

}  // namespace ddl
