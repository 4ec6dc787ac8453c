#pragma once

#include <cmath>
#include <cstdint>

namespace spar {

/// SplitMix64 generator.  Chosen over std:: distributions because the
/// standard leaves distribution algorithms implementation-defined; this
/// sequence is pinned by the code itself, so seeded outputs are stable
/// across standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [0, 1) with 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound), bound > 0.  Rejection-free modulo is
    /// fine here: bias is < 2^-53 for the bounds used in this project.
    std::uint64_t next_below(std::uint64_t bound) {
        return next_u64() % bound;
    }

    /// Standard normal via Marsaglia polar method.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_unit() - 1.0;
            v = 2.0 * next_unit() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    /// Poisson by sequential inversion.  Means above 500 are split into
    /// independent chunks (a sum of Poissons is Poisson), which keeps the
    /// running product away from underflow.
    std::int64_t next_poisson(double mean) {
        std::int64_t total = 0;
        while (mean > 500.0) {
            total += poisson_small(500.0);
            mean -= 500.0;
        }
        if (mean > 0.0) total += poisson_small(mean);
        return total;
    }

private:
    std::int64_t poisson_small(double mean) {
        const double limit = std::exp(-mean);
        double prod = 1.0;
        std::int64_t k = -1;
        do {
            ++k;
            prod *= next_unit();
        } while (prod > limit);
        return k;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Per-series stream derivation: mixes the master seed with a series
/// fingerprint so concurrent generation stays reproducible.
inline SplitMix64 series_stream(std::uint64_t master_seed, std::uint64_t series_ordinal) {
    return SplitMix64(master_seed ^ (0xD1B54A32D192ED03ULL * (series_ordinal + 1)));
}

} // namespace spar
