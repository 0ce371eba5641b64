#include "blv/distributions.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "blv/error.hpp"

namespace blv {

namespace {

// Below this the recurrences shift the argument up before the asymptotic series.
constexpr double kAsymptoticThreshold = 10.0;

void check_positive(double x, const char* fn) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw DomainError(std::string(fn) + ": argument must be finite and > 0, got " +
                          std::to_string(x));
    }
}

double stirling_log_gamma(double x) noexcept {
    const double r = 1.0 / x;
    const double r2 = r * r;
    // Bernoulli-number correction series up to B_16.
    const double series =
        r * (1.0 / 12.0 +
             r2 * (-1.0 / 360.0 +
                   r2 * (1.0 / 1260.0 +
                         r2 * (-1.0 / 1680.0 +
                               r2 * (1.0 / 1188.0 +
                                     r2 * (-691.0 / 360360.0 +
                                           r2 * (1.0 / 156.0 + r2 * (-3617.0 / 122400.0))))))));
    constexpr double half_log_two_pi = 0.91893853320467274178;
    return (x - 0.5) * std::log(x) - x + half_log_two_pi + series;
}

double asymptotic_digamma(double x) noexcept {
    const double r = 1.0 / x;
    const double r2 = r * r;
    const double series =
        r2 * (1.0 / 12.0 +
              r2 * (-1.0 / 120.0 +
                    r2 * (1.0 / 252.0 +
                          r2 * (-1.0 / 240.0 +
                                r2 * (1.0 / 132.0 + r2 * (-691.0 / 32760.0 + r2 * (1.0 / 12.0)))))));
    return std::log(x) - 0.5 * r - series;
}

double asymptotic_trigamma(double x) noexcept {
    const double r = 1.0 / x;
    const double r2 = r * r;
    const double series =
        r2 * r *
        (1.0 / 6.0 +
         r2 * (-1.0 / 30.0 +
               r2 * (1.0 / 42.0 +
                     r2 * (-1.0 / 30.0 +
                           r2 * (5.0 / 66.0 + r2 * (-691.0 / 2730.0 + r2 * (7.0 / 6.0)))))));
    return r + 0.5 * r2 + series;
}

}  // namespace

namespace detail {

double log_gamma_pos(double x) noexcept {
    if (x >= kAsymptoticThreshold) return stirling_log_gamma(x);
    double prod = 1.0;
    while (x < kAsymptoticThreshold) {
        prod *= x;
        x += 1.0;
    }
    return stirling_log_gamma(x) - std::log(prod);
}

double digamma_pos(double x) noexcept {
    double shift = 0.0;
    while (x < kAsymptoticThreshold) {
        shift += 1.0 / x;
        x += 1.0;
    }
    return asymptotic_digamma(x) - shift;
}

void log_gamma_digamma_pos(double x, double& lg, double& dg) noexcept {
    double prod = 1.0;
    double shift = 0.0;
    while (x < kAsymptoticThreshold) {
        prod *= x;
        shift += 1.0 / x;
        x += 1.0;
    }
    const double r = 1.0 / x;
    const double r2 = r * r;
    const double log_x = std::log(x);
    const double lg_series =
        r * (1.0 / 12.0 +
             r2 * (-1.0 / 360.0 +
                   r2 * (1.0 / 1260.0 +
                         r2 * (-1.0 / 1680.0 +
                               r2 * (1.0 / 1188.0 +
                                     r2 * (-691.0 / 360360.0 +
                                           r2 * (1.0 / 156.0 + r2 * (-3617.0 / 122400.0))))))));
    const double dg_series =
        r2 * (1.0 / 12.0 +
              r2 * (-1.0 / 120.0 +
                    r2 * (1.0 / 252.0 +
                          r2 * (-1.0 / 240.0 +
                                r2 * (1.0 / 132.0 + r2 * (-691.0 / 32760.0 + r2 * (1.0 / 12.0)))))));
    constexpr double half_log_two_pi = 0.91893853320467274178;
    lg = (x - 0.5) * log_x - x + half_log_two_pi + lg_series;
    if (prod != 1.0) lg -= std::log(prod);
    dg = log_x - 0.5 * r - dg_series - shift;
}

double trigamma_pos(double x) noexcept {
    double shift = 0.0;
    while (x < kAsymptoticThreshold) {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    return asymptotic_trigamma(x) + shift;
}

}  // namespace detail

double log_gamma(double x) {
    check_positive(x, "log_gamma");
    return detail::log_gamma_pos(x);
}

double digamma(double x) {
    check_positive(x, "digamma");
    return detail::digamma_pos(x);
}

double trigamma(double x) {
    check_positive(x, "trigamma");
    return detail::trigamma_pos(x);
}

BetaProp::BetaProp(double mu, double kappa) : mu_(mu), kappa_(kappa) {
    if (!(mu > 0.0 && mu < 1.0)) throw DomainError("BetaProp: mu must lie in (0,1)");
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("BetaProp: kappa must be > 0");
}

namespace {
void check_support(double y) {
    if (!(y > 0.0 && y < 1.0)) {
        throw DomainError("beta-proportion density: y must lie in (0,1), got " + std::to_string(y));
    }
}
}  // namespace

double log_density(const BetaProp& dist, double y) {
    check_support(y);
    const double a = dist.shape_a();
    const double b = dist.shape_b();
    const double log_beta =
        detail::log_gamma_pos(a) + detail::log_gamma_pos(b) - detail::log_gamma_pos(dist.kappa());
    return (a - 1.0) * std::log(y) + (b - 1.0) * std::log1p(-y) - log_beta;
}

BetaPropGradient log_density_grad(const BetaProp& dist, double y) {
    check_support(y);
    const double mu = dist.mu();
    const double kappa = dist.kappa();
    const double log_y = std::log(y);
    const double log_1my = std::log1p(-y);
    const double psi_a = detail::digamma_pos(dist.shape_a());
    const double psi_b = detail::digamma_pos(dist.shape_b());
    return {
        kappa * (log_y - log_1my - psi_a + psi_b),
        mu * log_y + (1.0 - mu) * log_1my - mu * psi_a - (1.0 - mu) * psi_b +
            detail::digamma_pos(kappa),
    };
}

double sample(const BetaProp& dist, Rng& rng, int max_attempts, long* redraws) {
    // X/(X+Y) with X ~ Gamma(a), Y ~ Gamma(b), formed in log space.
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const double log_x = rng.log_gamma_variate(dist.shape_a());
        const double log_y = rng.log_gamma_variate(dist.shape_b());
        const double y = logistic(log_x - log_y);
        if (y > 0.0 && y < 1.0) return y;
        if (redraws != nullptr) ++*redraws;
    }
    throw DomainError("beta-proportion sample: draw hit the boundary " +
                      std::to_string(max_attempts) + " times");
}

}  // namespace blv
