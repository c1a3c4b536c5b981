#pragma once

#include <cstdint>

namespace fra {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based uniform draw in [0, 1): a pure function of its arguments.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
    const std::uint64_t h = mix64(mix64(mix64(seed) ^ stream) ^ index);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Derives an independent child seed from a parent seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    return mix64(seed ^ mix64(tag + 0x632be59bd9b4e019ULL));
}

}  // namespace fra
