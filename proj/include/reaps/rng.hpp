#pragma once

#include <cstdint>
#include <random>

namespace reaps {

// splitmix64 finalizer; used to derive independent streams from (seed, index).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ (0x632be59bd9b4e019ull + b));
}

// mt19937_64 with hand-rolled scaling. The raw engine sequence is pinned by
// the standard, and none of the distribution helpers below depend on
// implementation-defined library behavior, so streams are reproducible
// across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(mix64(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, n); unbiased via rejection
    std::uint32_t uniform_u32(std::uint32_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return static_cast<std::uint32_t>(x % n);
    }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform_u32(static_cast<std::uint32_t>(hi - lo + 1)));
    }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    float uniform_f(float lo, float hi) {
        return static_cast<float>(lo + (hi - lo) * uniform());
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
};

}  // namespace reaps
