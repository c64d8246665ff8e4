#pragma once

#include <cstdint>

namespace gradleak {

// Counter-based, splittable 64-bit generator.
//
// Draw n (n = 1, 2, ...) of a stream with key k is
//     mix64(k + n * 0x9E3779B97F4A7C15)
// where mix64 is the SplitMix64 finaliser.  A child stream is keyed by
//     mix64(k ^ mix64(tag + 0xD1B54A32D192ED03)).
// Doubles use the top 53 bits; normals use Box-Muller on two consecutive
// uniforms and always consume exactly two draws.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

    static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * kGolden); }

    // Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform integer in [0, n) by rejection (n > 0).
    std::uint64_t below(std::uint64_t n) noexcept;

    double normal() noexcept;

    CounterRng split(std::uint64_t tag) const noexcept {
        return CounterRng(mix64(key_ ^ mix64(tag + kStreamSalt)));
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
    static constexpr std::uint64_t kStreamSalt = 0xD1B54A32D192ED03ULL;

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace gradleak
