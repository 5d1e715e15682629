#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace vlalab {

// splitmix64 step; also the basis for seed derivation.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Mixes a base seed with a purpose tag and up to three indices into a new
// stream seed. Streams derived with distinct tags/indices are independent,
// which keeps draws stable when unrelated parts of a pipeline change.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a = 0, uint64_t b = 0,
                            uint64_t c = 0) {
    uint64_t s = base ^ fnv1a64(tag);
    splitmix64(s);
    s ^= 0x9e3779b97f4a7c15ull * (a + 1);
    splitmix64(s);
    s ^= 0xc2b2ae3d27d4eb4full * (b + 1);
    splitmix64(s);
    s ^= 0x165667b19e3779f9ull * (c + 1);
    uint64_t out = splitmix64(s);
    return out;
}

// Deterministic RNG with explicitly implemented distributions so that the
// draw sequence is identical across compilers and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ^ 0x5851f42d4c957f2dull) {
        splitmix64(state_);
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // (0, 1]; safe as a log() argument
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        uint64_t threshold = (~n + 1) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int uniform_int(int n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

    // Box-Muller without caching: two uniforms per draw.
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // normal truncated to [-limit, limit] standard deviations
    double truncated_normal(double std, double limit = 2.0) {
        for (;;) {
            double z = normal();
            if (z >= -limit && z <= limit) return z * std;
        }
    }

    bool coin() { return (next_u64() & 1ull) != 0; }

private:
    uint64_t state_;
};

}  // namespace vlalab
