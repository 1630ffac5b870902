#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rhlp {

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Folds a list of keys into one seed. Order matters.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = splitmix64(seed);
    for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
    return h;
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    return Rng(derive_seed(seed, keys));
}

// Reinterprets a double's bits as a seed key.
std::uint64_t seed_key(double v) noexcept;

}  // namespace rhlp
