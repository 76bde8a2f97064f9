#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dreamdpo/vec.hpp"

namespace dreamdpo {

// Deterministic RNG. std::mt19937_64 supplies the raw stream; the uniform
// and normal transforms are done here rather than through std distributions
// because those are implementation-defined and would break byte-identical
// trace reproduction across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller. Uses exactly two raw draws per call;
    // the sine branch is discarded so the consumption pattern is fixed.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
    }

    // Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw ParameterError("uniform_int: empty range");
        const std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        const unsigned __int128 wide = static_cast<unsigned __int128>(gen_()) * range;
        return lo + static_cast<int>(wide >> 64);
    }

    Vec normal_vec(std::size_t n) {
        Vec v(n);
        for (auto& x : v) x = normal();
        return v;
    }

private:
    static constexpr double pi = 3.14159265358979323846;
    std::mt19937_64 gen_;
};

}  // namespace dreamdpo
