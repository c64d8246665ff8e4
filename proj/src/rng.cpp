#include "gradleak/rng.hpp"

#include <cmath>
#include <numbers>

namespace gradleak {

std::uint64_t CounterRng::below(std::uint64_t n) noexcept {
    // Largest multiple of n representable; values at or above it are redrawn.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x < limit) return x % n;
    }
}

double CounterRng::normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace gradleak
