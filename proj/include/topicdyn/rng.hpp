#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "hash.hpp"

namespace topicdyn {

using Engine = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Seed for the stream identified by (seed, key, counter). Streams keyed by
/// an entity id stay identical when the entities are reordered.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view key, std::uint64_t counter = 0) noexcept {
    return mix64(mix64(seed ^ mix64(fnv1a64(key))) + counter);
}

/// Uniform double in (0, 1) drawn directly from the keyed stream; `key_hash`
/// is fnv1a64 of the key.
constexpr double keyed_uniform(std::uint64_t seed, std::uint64_t key_hash, std::uint64_t counter) noexcept {
    const std::uint64_t x = mix64(mix64(seed ^ mix64(key_hash)) + counter);
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

inline Engine keyed_engine(std::uint64_t seed, std::string_view key, std::uint64_t counter = 0) {
    return Engine(stream_seed(seed, key, counter));
}

/// Uniform double in [0, 1).
inline double uniform01(Engine& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

} // namespace topicdyn
