#pragma once

/**
 * Counter-based random streams.
 *
 * Every stream is keyed by (seed, replica, cell) and advances only a local
 * counter, so draws are bitwise-reproducible regardless of the order in
 * which cells or replicas are processed.  The generator is the SplitMix64
 * sequence started at a mixed hash of the key.
 */

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace qpfield {

/// SplitMix64 step: returns the avalanche-mixed value of a 64-bit state.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t replica, std::uint64_t cell) {
        std::uint64_t h = mix64(seed);
        h = mix64(h ^ replica);
        h = mix64(h ^ cell);
        base_ = h;
    }

    std::uint64_t next_u64() { return mix64(base_ + (ctr_++) * 0x9e3779b97f4a7c15ull); }

    /// uniform in the open interval (0, 1) — safe under log()
    double next_u01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// standard normal (Box-Muller, second value cached)
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_u01();
        const double u2 = next_u01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    /// Poisson with the given mean (inversion by products; mean chunked so
    /// the product loop never underflows)
    long next_poisson(double mean) {
        if (mean < 0.0 || !std::isfinite(mean))
            throw std::invalid_argument("next_poisson: mean must be finite and >= 0");
        long k = 0;
        while (mean > 30.0) {
            k += poisson_knuth(30.0);
            mean -= 30.0;
        }
        return k + poisson_knuth(mean);
    }

  private:
    long poisson_knuth(double mean) {
        if (mean == 0.0) return 0;
        const double limit = std::exp(-mean);
        long k = 0;
        double prod = 1.0;
        do {
            ++k;
            prod *= next_u01();
        } while (prod > limit);
        return k - 1;
    }

    std::uint64_t base_ = 0;
    std::uint64_t ctr_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace qpfield
