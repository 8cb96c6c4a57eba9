#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace seps {

using Rng = std::mt19937_64;

/// FNV-1a, used to fold string identifiers into seeds.
constexpr std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

/// Deterministic stream for (seed, label, counter), independent of thread layout.
inline Rng make_rng(std::uint64_t seed, std::string_view label = {}, std::uint64_t counter = 0) {
    const std::uint64_t label_hash = fnv1a(label);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(label_hash),
                      static_cast<std::uint32_t>(label_hash >> 32),
                      static_cast<std::uint32_t>(counter),
                      static_cast<std::uint32_t>(counter >> 32)};
    return Rng(seq);
}

/// Standard Gumbel(0, 1) draw.
inline double gumbel(Rng& rng) {
    // u in (0, 1): both logs stay finite.
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double u = uniform(rng);
    while (u <= 0.0) u = uniform(rng);
    return -std::log(-std::log(u));
}

}  // namespace seps
