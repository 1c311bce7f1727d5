#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mergescope {

// Stateless counter-based randomness: every draw is a pure function of
// (key, counter), so results do not depend on evaluation order, chunking or
// thread scheduling. The stream at a fixed key is the splitmix64 sequence.

inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x00000100000001b3ULL;
    }
    return h;
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

    CounterRng(std::uint64_t seed, std::string_view stream)
        : key_(mix64(mix64(seed + kGolden) ^ fnv1a64(stream))) {}

    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix64(mix64(seed + kGolden) ^ mix64(stream + kGolden))) {}

    std::uint64_t bits(std::uint64_t counter) const {
        return mix64(key_ + (counter + 1) * kGolden);
    }

    // Uniform in [0, 1), 53 usable bits.
    double uniform(std::uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes counters 2c and 2c+1.
    double normal(std::uint64_t counter) const {
        const double u1 = 1.0 - uniform(2 * counter);     // (0, 1]
        const double u2 = uniform(2 * counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    std::uint64_t key() const { return key_; }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

    std::uint64_t key_;
};

} // namespace mergescope
