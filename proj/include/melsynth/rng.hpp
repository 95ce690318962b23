#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace melsynth {

// mt19937_64 with explicit value mappings. The engine's bit stream is fixed by
// the standard; std::*_distribution is not, so all mappings are done by hand to
// keep seeded runs reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1), safe for log()
    double uniform_open() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller
    double normal() {
        double u1 = uniform_open();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

private:
    std::mt19937_64 engine_;
};

// Deterministic stream splitting: derive an independent seed from a base seed
// and a stream tag (e.g. step number), so resume never needs saved RNG state.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

}  // namespace melsynth
