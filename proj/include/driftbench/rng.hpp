#ifndef DRIFTBENCH_RNG_HPP
#define DRIFTBENCH_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <type_traits>

namespace driftbench {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
    for (const char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

namespace detail {
constexpr std::uint64_t seed_part(std::string_view tag) noexcept { return fnv1a(tag); }

template <typename T>
    requires std::is_integral_v<T>
constexpr std::uint64_t seed_part(T value) noexcept {
    return static_cast<std::uint64_t>(value);
}
}  // namespace detail

/// Stable derivation of a sub-seed from a base seed and a list of tags or
/// indices. Used so every module draws from its own reproducible stream.
template <typename... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t base, const Parts&... parts) noexcept {
    std::uint64_t h = mix64(base);
    ((h = mix64(h ^ detail::seed_part(parts))), ...);
    return h;
}

}  // namespace driftbench

#endif  // DRIFTBENCH_RNG_HPP
