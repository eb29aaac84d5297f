#pragma once

#include <cmath>
#include <cstdint>

namespace fewmatch {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// One derived 64-bit value for a (seed, stream) pair.
inline std::uint64_t splitmix64_once(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (stream * 0x9e3779b97f4a7c15ull);
    return splitmix64(s);
}

// xoshiro256++ seeded through splitmix64. Every sampling path in the project
// goes through this generator; std:: engines and distributions are banned in
// those paths because their streams are implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Unbiased uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t x = next();
            if (x >= threshold) return x % bound;
        }
    }

    // Standard normal via Box-Muller; consumes exactly two raw draws.
    double next_gaussian() {
        const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Distinct deterministic stream for a labeled sub-task of a run seed.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t sm = seed;
        const std::uint64_t a = splitmix64(sm);
        sm = stream ^ 0xa0761d6478bd642full;
        const std::uint64_t b = splitmix64(sm);
        return Rng(a ^ (b + 0x9e3779b97f4a7c15ull));
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

}  // namespace fewmatch
