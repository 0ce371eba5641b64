#pragma once

#include "blv/rng.hpp"

namespace blv {

// Special functions for x > 0. Each throws DomainError for x <= 0 or NaN.
[[nodiscard]] double log_gamma(double x);
[[nodiscard]] double digamma(double x);
[[nodiscard]] double trigamma(double x);

namespace detail {
// Unchecked kernels used in hot loops where the argument is known positive.
double log_gamma_pos(double x) noexcept;
double digamma_pos(double x) noexcept;
double trigamma_pos(double x) noexcept;
// log Gamma(x) and digamma(x) sharing one logarithm.
void log_gamma_digamma_pos(double x, double& lg, double& dg) noexcept;
}  // namespace detail

[[nodiscard]] inline double logistic(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

[[nodiscard]] inline double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

/// Beta distribution in mean/precision form: shapes a = kappa*mu, b = kappa*(1-mu).
class BetaProp {
public:
    /// Throws DomainError unless 0 < mu < 1 and kappa > 0.
    BetaProp(double mu, double kappa);

    [[nodiscard]] double mu() const noexcept { return mu_; }
    [[nodiscard]] double kappa() const noexcept { return kappa_; }
    [[nodiscard]] double shape_a() const noexcept { return kappa_ * mu_; }
    [[nodiscard]] double shape_b() const noexcept { return kappa_ * (1.0 - mu_); }
    [[nodiscard]] double mean() const noexcept { return mu_; }
    [[nodiscard]] double variance() const noexcept { return mu_ * (1.0 - mu_) / (1.0 + kappa_); }

private:
    double mu_;
    double kappa_;
};

struct BetaPropGradient {
    double d_mu;
    double d_kappa;
};

/// log p(y | mu, kappa). y must lie strictly inside (0,1); never clamps.
[[nodiscard]] double log_density(const BetaProp& dist, double y);

/// Partial derivatives of log_density with respect to mu and kappa.
[[nodiscard]] BetaPropGradient log_density_grad(const BetaProp& dist, double y);

/// One draw in (0,1). Draws that round to exactly 0 or 1 are retried up to
/// `max_attempts` times before a DomainError; `redraws`, when given, counts retries.
double sample(const BetaProp& dist, Rng& rng, int max_attempts = 100, long* redraws = nullptr);

}  // namespace blv
