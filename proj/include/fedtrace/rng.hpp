#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fedtrace {

// Counter-based splittable RNG (splitmix64 core). Streams are derived by
// hashing tag tuples into the parent state, so any (seed, org, trace, ...)
// key yields the same stream regardless of draw order elsewhere.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

    Rng fork(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
        uint64_t h = state_;
        h = mix(h ^ mix(a ^ 0xbf58476d1ce4e5b9ULL));
        h = mix(h ^ mix(b ^ 0x94d049bb133111ebULL));
        h = mix(h ^ mix(c ^ 0xd6e8feb86659fd93ULL));
        return Rng(FromState{}, h);
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // [0, n); n > 0
    uint64_t uniform_int(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    // inclusive integer range
    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(uniform_int(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool chance(double p) { return uniform() < p; }

    // standard normal via Box-Muller (cos branch)
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[uniform_int(v.size())];
    }

  private:
    struct FromState {};
    Rng(FromState, uint64_t s) : state_(s) {}

    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    uint64_t state_;
};

}  // namespace fedtrace
