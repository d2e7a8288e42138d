#pragma once
// Seedable xoshiro256** generator with splitmix64 seeding.
// The algorithm name is recorded in every manifest and checkpoint so that
// persisted artifacts are self-describing.

#include <cstdint>
#include <cstddef>
#include <cmath>
#include <string>
#include <vector>

namespace siwinv {

inline constexpr const char* kRngAlgorithm = "xoshiro256** (splitmix64 seeded)";

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // splitmix64 expands the seed into the four state words
        std::uint64_t z = seed;
        for (auto& s : state_) {
            z += 0x9E3779B97F4A7C15ull;
            std::uint64_t x = z;
            x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
            x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
            s = x ^ (x >> 31);
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) using the top 53 bits.
    double uniform01() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform integer in [0, n). Modulo reduction: the bias for n values far
    // below 2^64 is negligible for this workload and keeps the draw count
    // fixed at one per call, which the shuffle contract depends on.
    std::uint64_t below(std::uint64_t n) {
        return next() % n;
    }

    // Fisher-Yates: for i = n-1 .. 1, swap(v[i], v[j]) with j = next() % (i+1).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t state_[4];
};

} // namespace siwinv
