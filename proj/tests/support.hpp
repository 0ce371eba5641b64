#pragma once

// Fixtures and independent reference implementations shared by the unit tests
// and the acceptance runner.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "blv/data.hpp"
#include "blv/distributions.hpp"
#include "blv/model.hpp"
#include "blv/rng.hpp"

namespace blv::test {

/// Panel of countries "C0".. with the given lengths, ages {0,1,5,...}, and q
/// drawn around logistic(-3 + noise).
inline MortalityPanel random_panel(const std::vector<int>& lengths, int J, Rng& rng) {
    std::vector<MortalityPanel::Entry> e;
    const auto ages = AgeGroup::standard();
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        for (int t = 0; t < lengths[i]; ++t) {
            for (int x = 0; x < J; ++x) {
                const double q = logistic(-3.0 + 0.4 * x - 0.1 * t + 0.3 * rng.normal());
                e.push_back({"C" + std::to_string(i), 1950 + static_cast<int>(i) + t,
                             ages[x].lower_bound(), q});
            }
        }
    }
    return MortalityPanel::from_entries(e);
}

/// Unconstrained vector with every coordinate drawn from N(0, scale^2) and
/// log kappa around `log_kappa`.
inline Eigen::VectorXd random_point(const ModelSpec& spec, Rng& rng, double scale = 0.7,
                                    double log_kappa = 4.0) {
    const ParamLayout layout(spec);
    Eigen::VectorXd x(layout.size());
    for (int d = 0; d < layout.size(); ++d) x(d) = scale * rng.normal();
    if (spec.variant == Variant::blv) {
        x(layout.log_kappa()) = log_kappa + 0.3 * rng.normal();
        for (int j = 0; j < layout.ages(); ++j) x(layout.beta(j)) = -3.0 + 0.5 * rng.normal();
    }
    return x;
}

inline double normal_log_pdf(double x, double variance) {
    return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + x * x / variance);
}

/// Log posterior of the BLV model written out directly from its definition:
/// states by the AR(1) recursion, beta-proportion likelihood via boost lgamma,
/// priors on the unconstrained scale including the tanh Jacobian of phi.
inline double reference_log_posterior(const ModelSpec& spec, const MortalityPanel& panel,
                                      const Eigen::VectorXd& x) {
    const ParamLayout L(spec);
    const auto& pr = spec.priors;
    const int J = L.ages(), K = L.K();
    const double kappa = std::exp(x(L.log_kappa()));
    double lp = 0.0;
    for (int i = 0; i < L.countries(); ++i) {
        const auto& s = panel.series(i);
        const double phi = std::tanh(x(L.u_phi(i)));
        const double sigma = std::exp(x(L.log_sigma(i)));
        std::vector<double> prev(K, 0.0);
        for (int t = 0; t < s.length(); ++t) {
            const int r = s.row_offset + t;
            std::vector<double> theta(K);
            for (int k = 0; k < K; ++k) {
                const double e = x(L.latent(r, k));
                theta[k] = t == 0 ? sigma / std::sqrt(1.0 - phi * phi) * e : phi * prev[k] + sigma * e;
            }
            for (int j = 0; j < J; ++j) {
                double eta = x(L.beta(j));
                for (int k = 0; k < K; ++k) eta += x(L.alpha(j, k)) * theta[k];
                const double mu = 1.0 / (1.0 + std::exp(-eta));
                const double a = kappa * mu, b = kappa * (1.0 - mu);
                const double y = panel.values()(r, j);
                lp += (a - 1.0) * std::log(y) + (b - 1.0) * std::log1p(-y) -
                      boost::math::lgamma(a) - boost::math::lgamma(b) + boost::math::lgamma(kappa);
            }
            prev = theta;
        }
    }
    for (int j = 0; j < J; ++j) {
        for (int k = 0; k < K; ++k) lp += normal_log_pdf(x(L.alpha(j, k)), pr.alpha_variance);
        lp += normal_log_pdf(x(L.beta(j)), pr.beta_variance);
    }
    lp += normal_log_pdf(x(L.log_kappa()), pr.log_kappa_variance);
    for (int i = 0; i < L.countries(); ++i) {
        const double u = x(L.u_phi(i));
        const double phi = std::tanh(u);
        lp += std::log(0.5) + std::log(1.0 - phi * phi);
        lp += normal_log_pdf(x(L.log_sigma(i)), pr.log_sigma_variance);
    }
    for (int r = 0; r < L.rows(); ++r) {
        for (int k = 0; k < K; ++k) lp += normal_log_pdf(x(L.latent(r, k)), 1.0);
    }
    return lp;
}

inline Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

/// Haar-distributed orthogonal matrix, reflections included.
inline Eigen::MatrixXd random_orthogonal(int K, Rng& rng) {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(K, K, rng));
    Eigen::MatrixXd Q = qr.householderQ();
    for (int k = 0; k < K; ++k) {
        if (qr.matrixQR()(k, k) < 0.0) Q.col(k) *= -1.0;
    }
    return Q;
}

inline double beta_prop_log_pdf(double y, double mu, double kappa) {
    const double a = kappa * mu, b = kappa * (1.0 - mu);
    return (a - 1.0) * std::log(y) + (b - 1.0) * std::log1p(-y) - boost::math::lgamma(a) -
           boost::math::lgamma(b) + boost::math::lgamma(kappa);
}

struct Moments {
    double mass, mean, variance;
};

/// Mass, mean and central second moment of BetaProp(mu, kappa) by quadrature
/// over mu +- 30 sd clipped to (0, 1): Gauss-Kronrod on an interior window,
/// tanh-sinh when the window reaches an end point that may be singular.
inline Moments quadrature_moments(double mu, double kappa) {
    boost::math::quadrature::tanh_sinh<double> ts;
    const BetaProp d(mu, kappa);
    const double sd = std::sqrt(d.variance());
    const double lo = std::max(0.0, mu - 30 * sd), hi = std::min(1.0, mu + 30 * sd);
    auto moment = [&](int power) {
        auto f = [&](double y) {
            if (y <= 0.0 || y >= 1.0) return 0.0;
            const double c = power == 2 ? (y - mu) * (y - mu) : (power == 1 ? y : 1.0);
            return c * std::exp(beta_prop_log_pdf(y, mu, kappa));
        };
        return lo > 0.0 && hi < 1.0
                   ? boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 12, 1e-13)
                   : ts.integrate(f, lo, hi);
    };
    return {moment(0), moment(1), moment(2)};
}

/// One country, two periods, two ages, K = 1.
inline MortalityPanel marginal_panel() {
    const std::vector<MortalityPanel::Entry> e{
        {"AAA", 2001, 0, 0.040}, {"AAA", 2001, 1, 0.010}, {"AAA", 2002, 0, 0.031}, {"AAA", 2002, 1, 0.013}};
    return MortalityPanel::from_entries(e);
}

inline BlvParameters marginal_params() {
    BlvParameters p;
    p.alpha = Eigen::MatrixXd(2, 1);
    p.alpha << 0.8, 0.5;
    p.beta = Eigen::Vector2d(logit(0.035), logit(0.011));
    p.kappa = 60.0;
    p.phi = Eigen::VectorXd::Constant(1, 0.6);
    p.sigma = Eigen::VectorXd::Constant(1, 0.5);
    return p;
}

/// log of the double integral over (eps_1, eps_2) of the likelihood of a
/// one-country, two-period, K = 1 panel times the standard normal density.
inline double quadrature_log_marginal(const MortalityPanel& panel, const BlvParameters& p) {
    const double phi = p.phi(0), sigma = p.sigma(0);
    const auto J = panel.age_count();
    auto log_joint = [&](double e1, double e2) {
        const double th1 = sigma / std::sqrt(1.0 - phi * phi) * e1;
        const double th2 = phi * th1 + sigma * e2;
        double s = -0.5 * (e1 * e1 + e2 * e2) - std::log(2.0 * std::numbers::pi);
        for (int j = 0; j < J; ++j) {
            s += beta_prop_log_pdf(panel.values()(0, j), logistic(p.beta(j) + p.alpha(j, 0) * th1), p.kappa);
            s += beta_prop_log_pdf(panel.values()(1, j), logistic(p.beta(j) + p.alpha(j, 0) * th2), p.kappa);
        }
        return s;
    };
    const double shift = log_joint(0.0, 0.0);
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double integral = GK::integrate(
        [&](double e1) {
            return GK::integrate([&](double e2) { return std::exp(log_joint(e1, e2) - shift); }, -9.0, 9.0,
                                 10, 1e-12);
        },
        -9.0, 9.0, 10, 1e-12);
    return shift + std::log(integral);
}

/// Largest |analytic - central difference| / max(1, |central difference|).
template <class F>
double max_gradient_error(F&& log_density, const Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
    double worst = 0.0;
    Eigen::VectorXd y = x;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
        const double h = 1e-6 * std::max(1.0, std::abs(x(d)));
        y(d) = x(d) + h;
        const double up = log_density(y);
        y(d) = x(d) - h;
        const double down = log_density(y);
        y(d) = x(d);
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(grad(d) - fd) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

}  // namespace blv::test
