#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace oslr {

// splitmix64 step; used for seed mixing and stream derivation.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Combine several integers into one seed. Order-sensitive.
inline uint64_t mix_seed(std::initializer_list<uint64_t> parts) {
    uint64_t s = 0x2545f4914f6cdd1dull;
    for (uint64_t p : parts) {
        s ^= p + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
        splitmix64(s);
    }
    uint64_t st = s;
    return splitmix64(st);
}

// PCG32 (O'Neill). Self-contained so that every generated byte is a pure
// function of the seed, independent of the standard library in use.
class Pcg32 {
  public:
    explicit Pcg32(uint64_t seed, uint64_t stream = 0xda3e39cb94b95bdbull) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ull + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Inclusive integer range. Unbiased via rejection.
    int uniform_int(int lo, int hi) {
        uint32_t span = static_cast<uint32_t>(hi - lo) + 1u;
        if (span == 0) return lo + static_cast<int>(next_u32());
        uint32_t limit = (~0u / span) * span;
        uint32_t v;
        do {
            v = next_u32();
        } while (v >= limit);
        return lo + static_cast<int>(v % span);
    }

    // Standard normal via Box-Muller (cached second value).
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    bool chance(double p) { return next_double() < p; }

  private:
    uint64_t state_ = 0;
    uint64_t inc_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace oslr
