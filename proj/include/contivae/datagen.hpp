#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "contivae/csv.hpp"
#include "contivae/distributions.hpp"
#include "contivae/rng.hpp"

namespace contivae {

/// covariate: curves read projections of the observed covariates.
/// confounded: curves read projections of hidden confounders; the observed
/// covariates are only noisy proxies of them.
enum class CurveStyle { covariate, confounded };

enum class CovariateKind { real, binary };

inline std::string to_string(CurveStyle s) {
    return s == CurveStyle::covariate ? "covariate" : "confounded";
}
inline CurveStyle curve_style_from_string(const std::string& s) {
    if (s == "covariate") return CurveStyle::covariate;
    if (s == "confounded") return CurveStyle::confounded;
    throw validation_error("unknown curve style '" + s + "'");
}

inline std::string to_string(CovariateKind k) {
    return k == CovariateKind::real ? "real" : "binary";
}
inline CovariateKind covariate_kind_from_string(const std::string& s) {
    if (s == "real") return CovariateKind::real;
    if (s == "binary") return CovariateKind::binary;
    throw validation_error("unknown covariate kind '" + s + "'");
}

/// Per-sample curve coefficients: every family is a fixed shape in t driven
/// by three sample-specific scalars.
struct CurveCoeffs {
    int family = 1;
    double scale = 10.0;
    double c1 = 0.0, c2 = 0.0, c3 = 0.0;
};

/// The four dose-response shapes over t in [0, 1]:
///   1: c1 + 12 t (t - k)^2 with k = 0.75 c2 / c3
///   2: c1 + sin(pi (c2 / c3) t)
///   3: c1 + 12 c2 t - 12 c3 t^2
///   4: cos((2 + c1) pi t + c2 pi) + c3
/// all multiplied by the scale constant.
inline double eval_dose_response(const CurveCoeffs& c, double t) {
    switch (c.family) {
        case 1: {
            const double k = 0.75 * c.c2 / c.c3;
            const double d = t - k;
            return c.scale * (c.c1 + 12.0 * t * d * d);
        }
        case 2:
            return c.scale * (c.c1 + std::sin(M_PI * (c.c2 / c.c3) * t));
        case 3:
            return c.scale * (c.c1 + 12.0 * c.c2 * t - 12.0 * c.c3 * t * t);
        case 4:
            return c.scale * (std::cos((2.0 + c.c1) * M_PI * t + c.c2 * M_PI) + c.c3);
        default:
            throw validation_error("curve family must be 1..4");
    }
}

namespace detail {

/// Smallest t whose value is within tol of the maximum. The smallest-
/// maximizer convention makes the analytic and grid routes agree when a
/// curve has several equal-height peaks.
inline double smallest_near_max(std::span<const double> ts, std::span<const double> vals,
                                double tol) {
    const double vmax = *std::max_element(vals.begin(), vals.end());
    double best = ts[0];
    bool found = false;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (vals[i] >= vmax - tol && (!found || ts[i] < best)) {
            best = ts[i];
            found = true;
        }
    }
    return best;
}

}  // namespace detail

/// Closed-form optimal dosage: evaluates the family's interior critical
/// points (clamped to [0, 1]) plus the endpoints and takes the smallest
/// maximizer.
inline double analytic_optimal_dose(const CurveCoeffs& c) {
    std::vector<double> cands = {0.0, 1.0};
    auto push_clamped = [&](double t) { cands.push_back(std::clamp(t, 0.0, 1.0)); };
    switch (c.family) {
        case 1: {
            const double k = 0.75 * c.c2 / c.c3;
            push_clamped(k / 3.0);
            break;
        }
        case 2: {
            // interior maxima of sin(pi s t): s t = 1/2 + 2k
            const double s = c.c2 / c.c3;
            if (std::abs(s) > 1e-12 && std::abs(s) < 1e5) {
                const double lo = std::min(0.0, s), hi = std::max(0.0, s);
                const long k_lo = static_cast<long>(std::ceil((lo - 0.5) / 2.0));
                const long k_hi = static_cast<long>(std::floor((hi - 0.5) / 2.0));
                for (long k = k_lo; k <= k_hi; ++k) {
                    const double t = (0.5 + 2.0 * static_cast<double>(k)) / s;
                    if (t > 0.0 && t < 1.0) cands.push_back(t);
                }
            }
            break;
        }
        case 3: {
            if (std::abs(c.c3) > 1e-300) push_clamped(c.c2 / (2.0 * c.c3));
            break;
        }
        case 4: {
            // cos peaks where (2 + c1) pi t + c2 pi = 2 pi k
            const double a = 2.0 + c.c1;
            if (std::abs(a) > 1e-12 && std::abs(a) < 1e5) {
                const double lo = std::min(c.c2, c.c2 + a), hi = std::max(c.c2, c.c2 + a);
                const long k_lo = static_cast<long>(std::ceil(lo / 2.0)) - 1;
                const long k_hi = static_cast<long>(std::floor(hi / 2.0)) + 1;
                for (long k = k_lo; k <= k_hi; ++k) {
                    const double t = (2.0 * static_cast<double>(k) - c.c2) / a;
                    if (t > 0.0 && t < 1.0) cands.push_back(t);
                }
            }
            break;
        }
        default:
            throw validation_error("curve family must be 1..4");
    }
    std::vector<double> vals(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) vals[i] = eval_dose_response(c, cands[i]);
    const double vmax = *std::max_element(vals.begin(), vals.end());
    return detail::smallest_near_max(cands, vals, 1e-11 * std::max(1.0, std::abs(vmax)));
}

/// Grid-search optimal dosage on a uniform grid. The tie tolerance covers
/// the grid's own sampling deficit (bounded through second differences) so
/// equal-height peaks resolve to the smallest maximizer here too.
inline double grid_optimal_dose(const CurveCoeffs& c, std::size_t points = 1025) {
    if (points < 2) throw contract_error("grid_optimal_dose: need at least 2 points");
    const auto ts = linspace(0.0, 1.0, points);
    std::vector<double> vals(points);
    for (std::size_t i = 0; i < points; ++i) vals[i] = eval_dose_response(c, ts[i]);
    const double h = 1.0 / static_cast<double>(points - 1);
    double max_dd = 0.0;
    for (std::size_t i = 1; i + 1 < points; ++i)
        max_dd = std::max(max_dd, std::abs(vals[i + 1] - 2.0 * vals[i] + vals[i - 1]));
    const double curvature_bound = max_dd / (h * h);
    const double vmax = *std::max_element(vals.begin(), vals.end());
    const double tol =
        1.25 * curvature_bound * h * h / 8.0 + 1e-11 * std::max(1.0, std::abs(vmax));
    return detail::smallest_near_max(ts, vals, tol);
}

/// Optimal dosage with the grid authoritative: returns the analytic answer
/// when it agrees with the 1025-point grid within 2/1024, the grid answer
/// otherwise. The case analysis behind the analytic rules misses some
/// parameter draws; the cross-check makes the result correct regardless.
inline double optimal_dose(const CurveCoeffs& c, bool* agreed = nullptr) {
    const double ta = analytic_optimal_dose(c);
    const double tg = grid_optimal_dose(c);
    const bool ok = std::abs(ta - tg) <= 2.0 / 1024.0;
    if (agreed) *agreed = ok;
    return ok ? ta : tg;
}

/// One of the four parameterized dose-response families with its sampled
/// parameters. covariate style holds three unit-norm direction vectors;
/// confounded style holds three d_u x d_x projection matrices.
struct CurveSpec {
    CurveStyle style = CurveStyle::covariate;
    int family = 1;
    double scale_c = 10.0;
    std::size_t d_x = 0, d_u = 0;
    std::vector<double> v1, v2, v3;  // covariate style
    Matrix m1, m2, m3;               // confounded style

    CurveCoeffs project(std::span<const double> x, std::span<const double> u) const {
        CurveCoeffs c;
        c.family = family;
        c.scale = scale_c;
        if (style == CurveStyle::covariate) {
            c.c1 = dot(v1, x);
            c.c2 = dot(v2, x);
            c.c3 = dot(v3, x);
        } else {
            if (u.size() != d_u) throw contract_error("CurveSpec: confounded style needs u");
            c.c1 = bilinear(m1, u, x);
            c.c2 = bilinear(m2, u, x);
            c.c3 = bilinear(m3, u, x);
        }
        return c;
    }

    double evaluate(std::span<const double> x, std::span<const double> u, double t) const {
        return eval_dose_response(project(x, u), t);
    }

   private:
    static double bilinear(const Matrix& m, std::span<const double> u,
                           std::span<const double> x) {
        double s = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) s += u[i] * dot(m.row(i), x);
        return s;
    }
};

// ---------------------------------------------------------------------------
// Covariate generation
// ---------------------------------------------------------------------------

/// Min-max scales each feature to [0, 1], then scales each row to unit
/// Euclidean norm. Constant features are left as-is (with a warning); rows
/// of all zeros become the uniform unit vector.
inline void normalize_covariates(Matrix& x) {
    for (std::size_t j = 0; j < x.cols; ++j) {
        double lo = x.at(0, j), hi = x.at(0, j);
        for (std::size_t i = 1; i < x.rows; ++i) {
            lo = std::min(lo, x.at(i, j));
            hi = std::max(hi, x.at(i, j));
        }
        if (hi <= lo) {
            std::cerr << "warning: covariate feature " << j
                      << " is constant, skipping min-max normalization\n";
            continue;
        }
        for (std::size_t i = 0; i < x.rows; ++i) x.at(i, j) = (x.at(i, j) - lo) / (hi - lo);
    }
    const double uniform_entry = 1.0 / std::sqrt(static_cast<double>(x.cols));
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double n = norm(x.row(i));
        if (n > 0.0) {
            for (std::size_t j = 0; j < x.cols; ++j) x.at(i, j) /= n;
        } else {
            for (std::size_t j = 0; j < x.cols; ++j) x.at(i, j) = uniform_entry;
        }
    }
}

/// Synthetic covariates: U[0,1] entries, then the shared normalization.
inline Matrix gen_covariates(std::size_t n, std::size_t d_x, Rng& rng) {
    if (n == 0 || d_x == 0) throw validation_error("gen_covariates: n and d_x must be positive");
    Matrix x(n, d_x);
    for (double& v : x.data) v = rng.u01();
    normalize_covariates(x);
    return x;
}

/// Covariates from a CSV file (raw feature matrix, optional header), run
/// through the same normalization as the synthetic path.
inline Matrix load_covariates_csv(const std::filesystem::path& path) {
    auto table = read_numeric_csv(path);
    if (table.rows.empty()) throw validation_error("covariate CSV has no rows: " + path.string());
    Matrix x(table.rows.size(), table.rows.front().size());
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) x.at(i, j) = table.rows[i][j];
    normalize_covariates(x);
    return x;
}

/// Hidden confounders u ~ N(0, I) with softplus-linear proxies:
/// x = softplus(A u + eta), then the shared normalization. A's entry scale
/// keeps the map close to linear so the proxies stay informative of u.
struct HiddenConfounderDraw {
    Matrix u;  // n x d_u, never visible to models
    Matrix x;  // n x d_x
};

inline HiddenConfounderDraw gen_hidden_confounders(std::size_t n, std::size_t d_u,
                                                   std::size_t d_x, double proxy_noise_sd,
                                                   Rng& rng, double proxy_scale = 0.3) {
    if (n == 0 || d_u == 0 || d_x == 0)
        throw validation_error("gen_hidden_confounders: dimensions must be positive");
    Matrix a(d_x, d_u);
    const double sd = proxy_scale / std::sqrt(static_cast<double>(d_u));
    for (double& v : a.data) v = sd * rng.normal();
    HiddenConfounderDraw out;
    out.u = Matrix(n, d_u);
    for (double& v : out.u.data) v = rng.normal();
    out.x = Matrix(n, d_x);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d_x; ++j) {
            const double pre = dot(a.row(j), out.u.row(i)) + proxy_noise_sd * rng.normal();
            out.x.at(i, j) = softplus(pre);
        }
    }
    normalize_covariates(out.x);
    return out;
}

// ---------------------------------------------------------------------------
// Curve parameter sampling
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> unit_normal_vector(std::size_t d, Rng& rng) {
    std::vector<double> v(d);
    for (double& e : v) e = rng.normal();
    const double n = norm(v);
    for (double& e : v) e /= n;
    return v;
}

inline Matrix normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal();
    return m;
}

}  // namespace detail

/// Samples curve parameters for the dataset at hand. Families 1 and 2
/// divide by the third projection, so parameters are rejection-resampled
/// until that projection is bounded away from zero on every sample.
inline CurveSpec make_curve_spec(CurveStyle style, int family, double scale_c, const Matrix& x,
                                 const Matrix* u, Rng& rng) {
    if (family < 1 || family > 4) throw validation_error("curve family must be 1..4");
    if (style == CurveStyle::confounded && u == nullptr)
        throw contract_error("make_curve_spec: confounded style needs hidden confounders");
    CurveSpec spec;
    spec.style = style;
    spec.family = family;
    spec.scale_c = scale_c;
    spec.d_x = x.cols;
    spec.d_u = u ? u->cols : 0;
    const bool needs_guard = family == 1 || family == 2;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        if (style == CurveStyle::covariate) {
            spec.v1 = detail::unit_normal_vector(x.cols, rng);
            spec.v2 = detail::unit_normal_vector(x.cols, rng);
            spec.v3 = detail::unit_normal_vector(x.cols, rng);
        } else {
            spec.m1 = detail::normal_matrix(u->cols, x.cols, rng);
            spec.m2 = detail::normal_matrix(u->cols, x.cols, rng);
            spec.m3 = detail::normal_matrix(u->cols, x.cols, rng);
        }
        if (!needs_guard) return spec;
        bool degenerate = false;
        for (std::size_t i = 0; i < x.rows && !degenerate; ++i) {
            const auto c = spec.project(x.row(i), u ? u->row(i) : std::span<const double>());
            degenerate = std::abs(c.c3) < 1e-8;
        }
        if (!degenerate) return spec;
    }
    throw numeric_error("make_curve_spec: could not draw nondegenerate curve parameters");
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

struct DataGenConfig {
    CurveStyle style = CurveStyle::covariate;
    int family = 1;
    std::size_t n = 1000;
    std::size_t d_x = 50;
    std::size_t d_u = 10;
    double alpha = 1.0;
    double scale_c = 10.0;
    double noise_sd = std::sqrt(0.02);
    double proxy_noise_sd = 0.1;
    double proxy_scale = 0.3;
    double test_frac = 0.2;
    std::uint64_t seed = 0;
    std::string covariate_csv;  // when nonempty, load instead of generating

    void validate() const {
        if (family < 1 || family > 4) throw validation_error("family must be 1..4");
        if (n < 2) throw validation_error("n must be at least 2");
        if (d_x == 0) throw validation_error("d_x must be positive");
        if (style == CurveStyle::confounded && d_u == 0)
            throw validation_error("d_u must be positive for confounded style");
        if (!(alpha >= 1.0)) throw validation_error("alpha must be >= 1");
        if (!(noise_sd >= 0.0)) throw validation_error("noise_sd must be >= 0");
        if (!(test_frac > 0.0 && test_frac < 1.0))
            throw validation_error("test_frac must be in (0, 1)");
    }
};

struct Dataset {
    Matrix x;
    std::vector<double> t, y;
    std::vector<std::size_t> train_indices, test_indices;
    CovariateKind covariate_kind = CovariateKind::real;
    DataGenConfig meta;

    struct Truth {
        CurveSpec curve;
        std::optional<Matrix> u;  // hidden confounders, eval-only
    };
    std::optional<Truth> truth;

    std::size_t n() const { return x.rows; }
    std::size_t covariate_dim() const { return x.cols; }

    std::span<const double> hidden_row(std::size_t i) const {
        if (truth && truth->u) return truth->u->row(i);
        return {};
    }
};

/// Dosage assignment plus noisy outcome observation. The per-sample Beta
/// mode is the true optimal dosage (clamped); alpha controls how sharply
/// assignment concentrates there.
inline Dataset assign_and_observe(CurveSpec spec, Matrix x, std::optional<Matrix> u, double alpha,
                                  double noise_sd, Rng& rng) {
    Dataset ds;
    const std::size_t n = x.rows;
    ds.t.resize(n);
    ds.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto coeffs =
            spec.project(x.row(i), u ? u->row(i) : std::span<const double>());
        const double t_star = optimal_dose(coeffs);
        try {
            BetaAssigner assigner{alpha, t_star};
            ds.t[i] = assigner.sample(rng);
        } catch (const contract_error& e) {
            throw contract_error(std::string(e.what()) + " (sample " + std::to_string(i) + ")");
        }
        ds.y[i] = eval_dose_response(coeffs, ds.t[i]) + noise_sd * rng.normal();
    }
    ds.x = std::move(x);
    ds.truth = Dataset::Truth{std::move(spec), std::move(u)};
    return ds;
}

/// Disjoint, exhaustive train/test index partition.
inline void split_train_test(Dataset& ds, double test_frac, Rng& rng) {
    const std::size_t n = ds.n();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    auto n_test = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    ds.test_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    ds.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(ds.test_indices.begin(), ds.test_indices.end());
    std::sort(ds.train_indices.begin(), ds.train_indices.end());
}

/// k disjoint, exhaustive folds of nearly equal size.
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t folds,
                                                           Rng& rng) {
    if (folds < 2 || folds > n) throw validation_error("kfold: need 2 <= folds <= n");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out(folds);
    const std::size_t base = n / folds, rem = n % folds;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t len = base + (f < rem ? 1 : 0);
        out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + len));
        std::sort(out[f].begin(), out[f].end());
        pos += len;
    }
    return out;
}

/// Full generation pipeline under one seed, fanned into independent streams
/// for covariates, curve parameters, assignment, and splitting.
inline Dataset generate_dataset(const DataGenConfig& cfg) {
    cfg.validate();
    Rng rng_cov(derive_seed(cfg.seed, "covariates"));
    Rng rng_curve(derive_seed(cfg.seed, "curve"));
    Rng rng_assign(derive_seed(cfg.seed, "assign"));
    Rng rng_split(derive_seed(cfg.seed, "split"));

    Matrix x;
    std::optional<Matrix> u;
    if (cfg.style == CurveStyle::confounded) {
        auto draw =
            gen_hidden_confounders(cfg.n, cfg.d_u, cfg.d_x, cfg.proxy_noise_sd, rng_cov,
                                   cfg.proxy_scale);
        x = std::move(draw.x);
        u = std::move(draw.u);
    } else if (!cfg.covariate_csv.empty()) {
        x = load_covariates_csv(cfg.covariate_csv);
        if (x.rows != cfg.n)
            throw validation_error("covariate CSV has " + std::to_string(x.rows) +
                                   " rows, config says n=" + std::to_string(cfg.n));
    } else {
        x = gen_covariates(cfg.n, cfg.d_x, rng_cov);
    }

    auto spec = make_curve_spec(cfg.style, cfg.family, cfg.scale_c, x, u ? &*u : nullptr,
                                rng_curve);
    auto ds = assign_and_observe(std::move(spec), std::move(x), std::move(u), cfg.alpha,
                                 cfg.noise_sd, rng_assign);
    split_train_test(ds, cfg.test_frac, rng_split);
    ds.meta = cfg;
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset files: CSV (x_0..x_{d-1}, t, y) + JSON sidecars. The hidden
// confounders and curve parameters live in a separate ground-truth file that
// only evaluation reads.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"values", m.data}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("values").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) throw io_error("matrix json has wrong value count");
    return m;
}

}  // namespace detail

inline nlohmann::json datagen_config_to_json(const DataGenConfig& c) {
    return {{"style", to_string(c.style)},
            {"family", c.family},
            {"n", c.n},
            {"d_x", c.d_x},
            {"d_u", c.d_u},
            {"alpha", c.alpha},
            {"scale_c", c.scale_c},
            {"noise_sd", c.noise_sd},
            {"proxy_noise_sd", c.proxy_noise_sd},
            {"proxy_scale", c.proxy_scale},
            {"test_frac", c.test_frac},
            {"seed", c.seed},
            {"covariate_csv", c.covariate_csv}};
}

inline DataGenConfig datagen_config_from_json(const nlohmann::json& j) {
    DataGenConfig c;
    c.style = curve_style_from_string(j.at("style").get<std::string>());
    c.family = j.at("family").get<int>();
    c.n = j.at("n").get<std::size_t>();
    c.d_x = j.at("d_x").get<std::size_t>();
    c.d_u = j.at("d_u").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.scale_c = j.at("scale_c").get<double>();
    c.noise_sd = j.at("noise_sd").get<double>();
    c.proxy_noise_sd = j.at("proxy_noise_sd").get<double>();
    c.proxy_scale = j.value("proxy_scale", 0.3);
    c.test_frac = j.at("test_frac").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.covariate_csv = j.value("covariate_csv", std::string());
    return c;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir,
                          const std::string& stem = "dataset") {
    std::filesystem::create_directories(dir);
    {
        CsvWriter csv(dir / (stem + ".csv"));
        std::vector<std::string> header;
        for (std::size_t j = 0; j < ds.x.cols; ++j) header.push_back("x_" + std::to_string(j));
        header.emplace_back("t");
        header.emplace_back("y");
        csv.row(header);
        std::vector<double> row(ds.x.cols + 2);
        for (std::size_t i = 0; i < ds.n(); ++i) {
            for (std::size_t j = 0; j < ds.x.cols; ++j) row[j] = ds.x.at(i, j);
            row[ds.x.cols] = ds.t[i];
            row[ds.x.cols + 1] = ds.y[i];
            csv.numeric_row(row);
        }
    }
    {
        nlohmann::json meta = {{"format_version", 1},
                               {"generator", datagen_config_to_json(ds.meta)},
                               {"covariate_kind", to_string(ds.covariate_kind)},
                               {"train_indices", ds.train_indices},
                               {"test_indices", ds.test_indices}};
        std::ofstream out(dir / (stem + ".meta.json"));
        if (!out) throw io_error("cannot write " + (dir / (stem + ".meta.json")).string());
        out << meta.dump(2) << '\n';
    }
    if (ds.truth) {
        nlohmann::json truth = {{"format_version", 1},
                                {"style", to_string(ds.truth->curve.style)},
                                {"family", ds.truth->curve.family},
                                {"scale_c", ds.truth->curve.scale_c},
                                {"d_x", ds.truth->curve.d_x},
                                {"d_u", ds.truth->curve.d_u},
                                {"seed", ds.meta.seed}};
        if (ds.truth->curve.style == CurveStyle::covariate) {
            truth["v1"] = ds.truth->curve.v1;
            truth["v2"] = ds.truth->curve.v2;
            truth["v3"] = ds.truth->curve.v3;
        } else {
            truth["m1"] = detail::matrix_to_json(ds.truth->curve.m1);
            truth["m2"] = detail::matrix_to_json(ds.truth->curve.m2);
            truth["m3"] = detail::matrix_to_json(ds.truth->curve.m3);
        }
        if (ds.truth->u) truth["u"] = detail::matrix_to_json(*ds.truth->u);
        std::ofstream out(dir / (stem + ".truth.json"));
        if (!out) throw io_error("cannot write " + (dir / (stem + ".truth.json")).string());
        out << truth.dump(2) << '\n';
    }
}

inline Dataset load_dataset(const std::filesystem::path& dir, const std::string& stem = "dataset",
                            bool with_truth = false) {
    Dataset ds;
    const auto csv_path = dir / (stem + ".csv");
    auto table = read_numeric_csv(csv_path);
    if (table.rows.empty()) throw io_error("dataset CSV has no rows: " + csv_path.string());
    const std::size_t width = table.rows.front().size();
    if (width < 3) throw io_error("dataset CSV needs at least x_0, t, y columns");
    const std::size_t d_x = width - 2;
    ds.x = Matrix(table.rows.size(), d_x);
    ds.t.resize(table.rows.size());
    ds.y.resize(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t j = 0; j < d_x; ++j) ds.x.at(i, j) = table.rows[i][j];
        ds.t[i] = table.rows[i][d_x];
        ds.y[i] = table.rows[i][d_x + 1];
    }

    const auto meta_path = dir / (stem + ".meta.json");
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw io_error("missing dataset metadata: " + meta_path.string());
    nlohmann::json meta = nlohmann::json::parse(meta_in);
    ds.meta = datagen_config_from_json(meta.at("generator"));
    ds.covariate_kind = covariate_kind_from_string(meta.at("covariate_kind").get<std::string>());
    ds.train_indices = meta.at("train_indices").get<std::vector<std::size_t>>();
    ds.test_indices = meta.at("test_indices").get<std::vector<std::size_t>>();
    if (ds.meta.n != ds.n())
        throw validation_error("dataset metadata n=" + std::to_string(ds.meta.n) +
                               " disagrees with CSV rows=" + std::to_string(ds.n()));

    if (with_truth) {
        const auto truth_path = dir / (stem + ".truth.json");
        std::ifstream truth_in(truth_path);
        if (!truth_in)
            throw validation_error("missing ground-truth sidecar: " + truth_path.string());
        nlohmann::json tj = nlohmann::json::parse(truth_in);
        Dataset::Truth truth;
        truth.curve.style = curve_style_from_string(tj.at("style").get<std::string>());
        truth.curve.family = tj.at("family").get<int>();
        truth.curve.scale_c = tj.at("scale_c").get<double>();
        truth.curve.d_x = tj.at("d_x").get<std::size_t>();
        truth.curve.d_u = tj.at("d_u").get<std::size_t>();
        if (truth.curve.style == CurveStyle::covariate) {
            truth.curve.v1 = tj.at("v1").get<std::vector<double>>();
            truth.curve.v2 = tj.at("v2").get<std::vector<double>>();
            truth.curve.v3 = tj.at("v3").get<std::vector<double>>();
        } else {
            truth.curve.m1 = detail::matrix_from_json(tj.at("m1"));
            truth.curve.m2 = detail::matrix_from_json(tj.at("m2"));
            truth.curve.m3 = detail::matrix_from_json(tj.at("m3"));
        }
        if (tj.contains("u")) truth.u = detail::matrix_from_json(tj.at("u"));
        ds.truth = std::move(truth);
    }
    return ds;
}

}  // namespace contivae
