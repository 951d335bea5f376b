#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "contivae/rng.hpp"
#include "contivae/tensor.hpp"

namespace contivae {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

/// Independent-component Gaussian given by mean and stddev vectors.
struct DiagGaussian {
    std::vector<double> mean;
    std::vector<double> stddev;

    double log_prob(std::span<const double> x) const {
        if (x.size() != mean.size() || stddev.size() != mean.size())
            throw contract_error("DiagGaussian::log_prob: dimension mismatch");
        double lp = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(stddev[i] > 0.0))
                throw contract_error("DiagGaussian::log_prob: stddev must be positive");
            const double z = (x[i] - mean[i]) / stddev[i];
            lp += -0.5 * kLogTwoPi - std::log(stddev[i]) - 0.5 * z * z;
        }
        return lp;
    }

    std::vector<double> sample(Rng& rng) const {
        std::vector<double> out(mean.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean[i] + stddev[i] * rng.normal();
        return out;
    }
};

namespace detail {

/// Kummer's M(b+1/2, b, y) for y >= 0 computed as a positive-term series,
/// returned in log space. Terms are rescaled on the fly so large y does not
/// overflow. Stops when the running term falls below 1e-14 of the sum.
inline double log_kummer_m_half_over(double b, double y, std::size_t max_terms = 200000) {
    double term = 1.0, sum = 1.0, log_scale = 0.0;
    for (std::size_t n = 0; n < max_terms; ++n) {
        const double dn = static_cast<double>(n);
        term *= (b + 0.5 + dn) * y / ((b + dn) * (dn + 1.0));
        sum += term;
        if (term < sum * 1e-14 && dn > y) return std::log(sum) + log_scale;
        if (sum > 1e280) {
            sum *= 1e-280;
            term *= 1e-280;
            log_scale += std::log(1e280);
        }
    }
    throw numeric_error("confluent hypergeometric series did not converge");
}

}  // namespace detail

/// Mean of the noncentral chi distribution with d degrees of freedom and
/// noncentrality r: E||z|| for z ~ N(mu, I_d) with ||mu|| = r. Equals
/// sqrt(pi/2) * L^{d/2-1}_{1/2}(-r^2/2) with L the generalized Laguerre
/// function, evaluated through the Kummer-transformed confluent series
/// M(-1/2, d/2, -y) = e^{-y} M(d/2+1/2, d/2, y).
inline double expected_norm(double r, std::size_t d) {
    if (!(r >= 0.0)) throw contract_error("expected_norm: r must be >= 0");
    if (d < 1) throw contract_error("expected_norm: d must be >= 1");
    const double dd = static_cast<double>(d);
    const double y = 0.5 * r * r;
    const double log_ratio = std::lgamma(0.5 * (dd + 1.0)) - std::lgamma(0.5 * dd);
    const double log_m = detail::log_kummer_m_half_over(0.5 * dd, y) - y;
    return std::exp(0.5 * std::log(2.0) + log_ratio + log_m);
}

namespace detail {

template <class F>
double golden_section_min(F f, double lo, double hi, double tol) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - gr * (hi - lo);
    double d = lo + gr * (hi - lo);
    double fc = f(c), fd = f(d);
    while (hi - lo > tol) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = f(d);
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Norm of the mean vector that minimizes
///   phi(r) = -tau * E||z||(r, d) + r^2 / 2
/// over r >= 0: the mean-norm target at which the tilted-prior KL term
/// vanishes. Coarse scan over [0, tau + sqrt(d) + 5] brackets the global
/// minimum, golden section refines it to 1e-6. Results are cached per
/// (tau, d) since this is a constant of the architecture.
inline double solve_optimal_norm(double tau, std::size_t d) {
    if (!(tau >= 0.0)) throw contract_error("solve_optimal_norm: tau must be >= 0");
    if (d < 1) throw contract_error("solve_optimal_norm: d must be >= 1");
    if (tau == 0.0) return 0.0;

    static std::mutex cache_mutex;
    static std::map<std::pair<double, std::size_t>, double> cache;
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find({tau, d});
        if (it != cache.end()) return it->second;
    }

    auto phi = [tau, d](double r) { return -tau * expected_norm(r, d) + 0.5 * r * r; };
    const double hi = tau + std::sqrt(static_cast<double>(d)) + 5.0;
    const std::size_t scan_points = 257;
    double best_r = 0.0, best_phi = phi(0.0);
    for (std::size_t i = 1; i < scan_points; ++i) {
        const double r = hi * static_cast<double>(i) / static_cast<double>(scan_points - 1);
        const double p = phi(r);
        if (p < best_phi) {
            best_phi = p;
            best_r = r;
        }
    }
    const double step = hi / static_cast<double>(scan_points - 1);
    const double lo_b = std::max(0.0, best_r - step);
    const double hi_b = std::min(hi, best_r + step);
    double r_star = detail::golden_section_min(phi, lo_b, hi_b, 1e-7);
    if (phi(0.0) <= phi(r_star)) r_star = 0.0;  // boundary can win for small tau

    std::lock_guard<std::mutex> lock(cache_mutex);
    cache.emplace(std::make_pair(tau, d), r_star);
    return r_star;
}

/// Standard Gaussian tilted by e^{tau * ||z||}: density proportional to
/// e^{tau ||z||} e^{-||z||^2 / 2}; its high-density region is the sphere of
/// radius ~tau instead of a point. tau = 0 recovers N(0, I).
class TiltedGaussianPrior {
   public:
    TiltedGaussianPrior(double tilt, std::size_t latent_dim)
        : tilt_(tilt), dim_(latent_dim), optimal_norm_(solve_optimal_norm(tilt, latent_dim)) {
        log_partition_ = tilt_ == 0.0 ? 0.0 : compute_log_partition();
    }

    double tilt() const { return tilt_; }
    std::size_t latent_dim() const { return dim_; }

    /// Cached ||mu*||: where the KL surrogate vanishes.
    double optimal_norm() const { return optimal_norm_; }

    /// ln E_{z~N(0,I)}[e^{tau ||z||}]
    double log_partition() const { return log_partition_; }

    double density(std::span<const double> z) const {
        if (z.size() != dim_) throw contract_error("TiltedGaussianPrior::density: wrong dim");
        const double r = norm(z);
        const double dd = static_cast<double>(dim_);
        return std::exp(tilt_ * r - 0.5 * r * r - log_partition_ - 0.5 * dd * kLogTwoPi);
    }

   private:
    /// Radial quadrature of e^{tau s} against the chi_d density: composite
    /// Simpson over [0, peak + 12] with the exponent peak factored out.
    double compute_log_partition() const {
        const double dd = static_cast<double>(dim_);
        const double log_chi_norm = (0.5 * dd - 1.0) * std::log(2.0) + std::lgamma(0.5 * dd);
        auto log_f = [&](double s) {
            if (s <= 0.0) return -std::numeric_limits<double>::infinity();
            double lf = tilt_ * s - 0.5 * s * s - log_chi_norm;
            if (dim_ > 1) lf += (dd - 1.0) * std::log(s);
            return lf;
        };
        const double peak = 0.5 * (tilt_ + std::sqrt(tilt_ * tilt_ + 4.0 * (dd - 1.0)));
        const double smax = peak + 12.0;
        const std::size_t n = 1 << 15;  // Simpson intervals (even)
        const double h = smax / static_cast<double>(n);
        const double lm = log_f(std::max(peak, h));
        double acc = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            const double s = h * static_cast<double>(i);
            const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            const double lf = log_f(s);
            if (std::isfinite(lf)) acc += w * std::exp(lf - lm);
        }
        return lm + std::log(acc * h / 3.0);
    }

    double tilt_;
    std::size_t dim_;
    double optimal_norm_;
    double log_partition_;
};

/// KL surrogate for a diagonal-Gaussian posterior against the tilted prior:
/// (||mu|| - ||mu*||)^2 / 2. Only the posterior mean enters.
inline double tilted_kl(std::span<const double> mu_z, const TiltedGaussianPrior& prior) {
    if (mu_z.size() != prior.latent_dim())
        throw contract_error("tilted_kl: dim(mu_z) != prior latent dim");
    const double gap = norm(mu_z) - prior.optimal_norm();
    return 0.5 * gap * gap;
}

// ---------------------------------------------------------------------------
// Tape-differentiable row-wise forms used in training losses. Inputs are
// batch matrices [B x k]; outputs are per-sample columns [B x 1].
// ---------------------------------------------------------------------------

/// Diagonal-Gaussian log density per row.
inline TensorPtr gaussian_log_prob_rows(Tape& tape, const TensorPtr& x, const TensorPtr& mu,
                                        const TensorPtr& sigma) {
    if (x->rows() != mu->rows() || x->cols() != mu->cols() || mu->rows() != sigma->rows() ||
        mu->cols() != sigma->cols())
        throw contract_error("gaussian_log_prob_rows: shape mismatch, x " + x->shape_str() +
                             " mu " + mu->shape_str() + " sigma " + sigma->shape_str());
    for (double s : sigma->values)
        if (!(s > 0.0)) throw contract_error("gaussian_log_prob_rows: sigma must be positive");
    auto zscore = div(tape, sub(tape, x, mu), sigma);
    auto quad = mul_scalar(tape, row_sum(tape, square(tape, zscore)), 0.5);
    auto logdet = row_sum(tape, log(tape, sigma));
    auto lp = neg(tape, add(tape, quad, logdet));
    return add_scalar(tape, lp, -0.5 * kLogTwoPi * static_cast<double>(x->cols()));
}

/// Scalar convenience form for a single sample.
inline TensorPtr gaussian_log_prob(Tape& tape, const TensorPtr& x, const TensorPtr& mu,
                                   const TensorPtr& sigma) {
    return sum(tape, gaussian_log_prob_rows(tape, x, mu, sigma));
}

/// Independent Bernoulli log likelihood per row, from logits:
/// sum_j x_j * l_j - softplus(l_j).
inline TensorPtr bernoulli_log_prob_rows(Tape& tape, const TensorPtr& x,
                                         const TensorPtr& logits) {
    if (x->rows() != logits->rows() || x->cols() != logits->cols())
        throw contract_error("bernoulli_log_prob_rows: shape mismatch");
    return row_sum(tape, sub(tape, mul(tape, x, logits), softplus(tape, logits)));
}

/// z = mu + sigma o eps with eps ~ N(0, I); gradients flow to mu and sigma.
inline TensorPtr reparam_sample(Tape& tape, const TensorPtr& mu, const TensorPtr& sigma,
                                Rng& rng) {
    if (mu->rows() != sigma->rows() || mu->cols() != sigma->cols())
        throw contract_error("reparam_sample: mu/sigma shape mismatch");
    auto eps = Tensor::zeros(mu->rows(), mu->cols());
    for (double& e : eps->values) e = rng.normal();
    return add(tape, mu, mul(tape, sigma, eps));
}

/// Tilted-prior KL surrogate per row: (||mu_row|| - ||mu*||)^2 / 2.
inline TensorPtr tilted_kl_rows(Tape& tape, const TensorPtr& mu_z,
                                const TiltedGaussianPrior& prior) {
    if (mu_z->cols() != prior.latent_dim())
        throw contract_error("tilted_kl_rows: dim(mu_z) != prior latent dim");
    auto norms = sqrt(tape, row_sum(tape, square(tape, mu_z)));
    return mul_scalar(tape, square(tape, add_scalar(tape, norms, -prior.optimal_norm())), 0.5);
}

/// Closed-form KL(N(mu, diag sigma^2) || N(0, I)) per row.
inline TensorPtr normal_kl_rows(Tape& tape, const TensorPtr& mu, const TensorPtr& sigma) {
    if (mu->rows() != sigma->rows() || mu->cols() != sigma->cols())
        throw contract_error("normal_kl_rows: mu/sigma shape mismatch");
    auto moments = add(tape, square(tape, mu), square(tape, sigma));
    auto ent = add_scalar(tape, mul_scalar(tape, log(tape, sigma), 2.0), 1.0);
    return mul_scalar(tape, row_sum(tape, sub(tape, moments, ent)), 0.5);
}

// ---------------------------------------------------------------------------
// Dosage assignment
// ---------------------------------------------------------------------------

/// Second Beta shape making the mode of Beta(alpha, beta) equal t_star.
/// No clamping here; throws when the pair is inconsistent.
inline double beta_shape_param(double alpha, double t_star) {
    if (!(alpha >= 1.0)) throw contract_error("beta_shape_param: alpha must be >= 1");
    const double beta = (alpha - 1.0) / t_star + 2.0 - alpha;
    if (!(beta > 0.0))
        throw contract_error("beta_shape_param: inconsistent alpha/t* give beta <= 0");
    return beta;
}

/// Skewed dosage assignment: draws from Beta(alpha, beta) whose mode is the
/// per-sample optimal dosage. alpha = 1 is the unbiased (uniform) case.
struct BetaAssigner {
    double alpha = 1.0;  // skew, >= 1
    double mode = 0.5;   // target dosage mode t*

    /// Optimal dosages can hit 0 or 1 where beta diverges.
    static double clamp_mode(double t) { return std::min(0.99, std::max(0.01, t)); }

    double beta_shape() const { return beta_shape_param(alpha, clamp_mode(mode)); }

    double sample(Rng& rng) const { return rng.beta(alpha, beta_shape()); }
};

}  // namespace contivae
