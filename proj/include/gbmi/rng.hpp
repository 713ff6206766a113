#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace gbmi {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

// Mixes a seed with stream keys into a fresh 64-bit seed. Used to derive
// independent, reproducible substreams (per replication, per iteration, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = seed;
    detail::splitmix64(s);
    s ^= detail::splitmix64(a) + 0x9E3779B97F4A7C15ULL;
    detail::splitmix64(s);
    s ^= detail::splitmix64(b) + 0x6A09E667F3BCC909ULL;
    return detail::splitmix64(s);
}

// Seeded RNG (xoshiro256++ core, splitmix64 seeding). All draws are
// hand-rolled so identical seeds give identical streams on every platform
// and standard library; std::*_distribution is implementation-defined and
// would break the bit-reproducibility contract.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = detail::splitmix64(s);
    }

    Rng(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b = 0)
        : Rng(derive_seed(seed, stream_a, stream_b)) {}

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform over {0, ..., n-1}, unbiased via rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        const std::uint64_t bucket = UINT64_MAX / n;
        const std::uint64_t limit = bucket * n;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return r / bucket;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal, Marsaglia polar method with cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

  private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace gbmi
