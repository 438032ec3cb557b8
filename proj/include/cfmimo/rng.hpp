#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

namespace cfmimo {

/// Independent random streams hanging off a single seed. Each consumer of
/// randomness owns one tag so that adding draws in one place never shifts
/// another stream.
enum class StreamTag : std::uint64_t {
    Sample = 1,
    UeDrop = 2,
    Coefficients = 3,
    Channel = 4,
    PilotNoise = 5,
    Split = 6,
    WeightInit = 7,
    Shuffle = 8,
    Instance = 9,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based seed derivation: the child seed depends only on
/// (parent, index, tag), so samples can be generated in any order.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index,
                                    StreamTag tag) noexcept {
    std::uint64_t h = splitmix64(parent);
    h = splitmix64(h ^ splitmix64(index + 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(tag) * 0xd1342543de82ef95ULL));
    return h;
}

/// mt19937_64 plus explicit conversions; std distributions are avoided
/// because their output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection keeps the draw exactly uniform
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Circularly-symmetric CN(0, 1).
    std::complex<double> complex_normal() {
        const double re = normal();
        const double im = normal();
        return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cfmimo
