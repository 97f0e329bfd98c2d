#pragma once

// Seeded RNG helpers.  Draws are routed through explicit bit manipulation so
// streams are identical across compilers and standard libraries.

#include <cstdint>
#include <complex>
#include <random>

namespace hermflow {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }
    // uniform in [lo,hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::complex<double> complex_unit() {
        return {uniform(-1.0, 1.0), uniform(-1.0, 1.0)};
    }

    int integer(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform() * (hi - lo + 1));
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace hermflow
