#pragma once

// Seed derivation and random engines. //

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bkrc {

using engine_type = std::mt19937_64;

/// One round of the splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Combine a base seed with a list of integer tags into a new seed.
/// The result depends only on the values, never on call order elsewhere.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept
{
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

// Tags separating independent random streams derived from one base seed.
namespace stream {
inline constexpr std::uint64_t adjacency = 1;
inline constexpr std::uint64_t input_matrix = 2;
inline constexpr std::uint64_t input_noise = 3;
inline constexpr std::uint64_t initial_condition = 4;
inline constexpr std::uint64_t spectral_start = 5;
inline constexpr std::uint64_t matrix_set = 6;
inline constexpr std::uint64_t per_point = 7;
inline constexpr std::uint64_t section = 8;
}  // namespace stream

inline engine_type make_engine(std::uint64_t seed) { return engine_type{seed}; }

}  // namespace bkrc
