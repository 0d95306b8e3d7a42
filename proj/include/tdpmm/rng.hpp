#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tdpmm {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for a named pipeline stage, derived from the single root seed:
/// seed = splitmix64(root ^ fnv1a(stage)).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stage) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : stage) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix_seed(root ^ h);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace tdpmm
