#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace contivae {

inline constexpr std::string_view kVersion = "0.1.0";

/// Base class for all library errors. Subclasses map onto CLI exit
/// categories: contract/validation -> 2, io -> 3, numeric -> 4.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Precondition or API-contract violation (caller bug).
struct contract_error : error {
    using error::error;
};

/// Tensor shape disagreement.
struct dim_error : contract_error {
    using contract_error::contract_error;
};

/// Bad user input: config values, mismatched files, invalid flags.
struct validation_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

/// Non-finite values, series non-convergence, domain violations.
struct numeric_error : error {
    using error::error;
};

/// Dense row-major matrix of doubles. Plain storage, no math attached;
/// the autodiff Tensor is a separate type.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(data.data() + r * cols, cols);
    }
    std::span<double> row(std::size_t r) {
        return std::span<double>(data.data() + r * cols, cols);
    }
};

inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double squared_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Uniform grid of n points covering [lo, hi] inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n < 2) throw contract_error("linspace: need at least 2 points");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace contivae
