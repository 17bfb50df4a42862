#pragma once

#include <cstdint>
#include <random>

namespace difform {

// Seeded generator with a fixed float mapping so streams are reproducible
// across platforms independent of std::uniform_real_distribution quirks.
struct Rng {
    std::mt19937_64 engine;

    explicit Rng(uint64_t seed) : engine(seed) {}

    // uniform in [0,1)
    double uniform() { return (engine() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // uniform integer in [0, n)
    int64_t index(int64_t n) { return static_cast<int64_t>(uniform() * n); }
};

}  // namespace difform
