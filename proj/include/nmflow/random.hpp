// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace nmflow {

// Deterministic RNG. mt19937_64 output is bit-exact by the standard; the
// uniform/normal transforms are implemented here rather than with
// std::*_distribution so that sampled streams do not depend on the
// standard-library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return (engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller; draws two uniforms per sample.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Normal truncated to [-2, 2] standard deviations, rejection sampled.
    double trunc_normal(double mean, double stddev) {
        double z = normal();
        while (z < -2.0 || z > 2.0) z = normal();
        return mean + stddev * z;
    }

    void fill_normal(std::vector<double>& v, double mean, double stddev) {
        for (double& x : v) x = normal(mean, stddev);
    }

    void fill_trunc_normal(std::vector<double>& v, double mean, double stddev) {
        for (double& x : v) x = trunc_normal(mean, stddev);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace nmflow
