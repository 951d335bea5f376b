#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "contivae/common.hpp"

namespace contivae {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Fans a master seed out into independent named streams. Labels keep the
/// sub-streams stable: adding a new consumer does not shift existing ones,
/// and changing the index (e.g. repeat number) only perturbs that run.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                 std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(label);
    h ^= splitmix64(master);
    return splitmix64(h + splitmix64(index));
}

/// Deterministic random source. Wraps mt19937_64 (bit-exact per the
/// standard) and implements all non-uniform draws by hand, because the
/// std::*_distribution algorithms are implementation-defined and would
/// break run-to-run reproducibility across toolchains.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1), 53-bit resolution.
    double u01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    /// Standard normal via Marsaglia's polar method (spare value cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * u01() - 1.0;
            v = 2.0 * u01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang squeeze; requires shape >= 1.
    double gamma(double shape) {
        if (!(shape >= 1.0)) throw contract_error("Rng::gamma: shape must be >= 1");
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = u01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Beta(a, b) as the normalized ratio of two gamma draws.
    double beta(double a, double b) {
        const double ga = gamma(a);
        const double gb = gamma(b);
        return ga / (ga + gb);
    }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        const auto k = static_cast<std::size_t>(u01() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    /// Fisher-Yates; std::shuffle is not reproducible across toolchains.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    std::uint64_t next_u64() { return engine_(); }

   private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace contivae
