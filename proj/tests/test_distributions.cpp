#include <doctest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>

#include "blv/distributions.hpp"
#include "blv/error.hpp"
#include "support.hpp"

using namespace blv;

namespace {

struct SpecialValue {
    double x, log_gamma, digamma, trigamma;
};

// mpmath at 30 digits.
constexpr SpecialValue kTable[] = {
    {0.001, 6.9071788853838536825, -1000.5755719318103005, 1000001.642533195869},
    {0.5, 0.57236494292470008707, -1.9635100260214234794, 4.9348022005446793094},
    {1.0, 0.0, -0.57721566490153286061, 1.6449340668482264365},
    {2.5, 0.28468287047291915963, 0.70315664064524318723, 0.49035775610023486497},
    {7.3, 7.1478925230222490328, 1.9178203356379860984, 0.14679576813142709816},
    {10.0, 12.801827480081469611, 2.2517525890667211076, 0.10516633568168574612},
    {55.5, 166.32150615984036914, 4.0073469585404439122, 0.018181317363221761045},
    {1000.0, 5905.2204232091812118, 6.9072551956488120521, 0.0010005001666666333334},
    {20337.5, 181410.96870344128826, 9.9201971661998183275, 0.00004917146087419550342},
};

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("special functions match 30-digit reference values") {
    for (const auto& v : kTable) {
        CAPTURE(v.x);
        CHECK(rel(log_gamma(v.x), v.log_gamma) < 1e-14);
        CHECK(rel(digamma(v.x), v.digamma) < 1e-14);
        CHECK(std::abs(trigamma(v.x) - v.trigamma) / v.trigamma < 1e-13);
    }
}

TEST_CASE("special functions agree with boost on a dense grid") {
    for (double x = 1e-4; x < 5e4; x *= 1.37) {
        CAPTURE(x);
        CHECK(rel(log_gamma(x), boost::math::lgamma(x)) < 1e-13);
        CHECK(rel(digamma(x), boost::math::digamma(x)) < 1e-13);
        CHECK(std::abs(trigamma(x) - boost::math::trigamma(x)) / boost::math::trigamma(x) < 1e-12);
        double lg = 0.0, dg = 0.0;
        detail::log_gamma_digamma_pos(x, lg, dg);
        CHECK(rel(lg, boost::math::lgamma(x)) < 1e-13);
        CHECK(rel(dg, boost::math::digamma(x)) < 1e-13);
    }
}

TEST_CASE("special functions reject non-positive arguments") {
    CHECK_THROWS_AS((void)log_gamma(0.0), DomainError);
    CHECK_THROWS_AS((void)digamma(-1.0), DomainError);
    CHECK_THROWS_AS((void)trigamma(std::nan("")), DomainError);
}

TEST_CASE("logistic") {
    CHECK(logistic(-1.0) == doctest::Approx(0.2689414213699951).epsilon(1e-15));
    CHECK(logistic(0.0) == 0.5);
    CHECK(logistic(800.0) == 1.0);
    CHECK(logistic(-800.0) >= 0.0);
    CHECK(logit(logistic(-3.25)) == doctest::Approx(-3.25).epsilon(1e-14));
}

TEST_CASE("beta-proportion log density") {
    CHECK(log_density(BetaProp(0.2, 10.0), 0.2) == doctest::Approx(1.1052233473824866461).epsilon(1e-14));
    CHECK(log_density(BetaProp(0.01, std::exp(9.92)), 0.0105) ==
          doctest::Approx(6.0514128900105427531).epsilon(1e-11));
    // mu = 1/2, kappa = 2 is the uniform density.
    CHECK(std::abs(log_density(BetaProp(0.5, 2.0), 0.37)) < 1e-14);
}

TEST_CASE("beta-proportion rejects values outside the support") {
    CHECK_THROWS_AS(BetaProp(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(BetaProp(0.5, -1.0), DomainError);
    const BetaProp d(0.3, 5.0);
    CHECK_THROWS_AS((void)log_density(d, 0.0), DomainError);
    CHECK_THROWS_AS((void)log_density(d, 1.0), DomainError);
    CHECK_THROWS_AS((void)log_density_grad(d, 1.5), DomainError);
}

TEST_CASE("beta-proportion gradient") {
    const auto g = log_density_grad(BetaProp(0.3, 25.0), 0.4);
    CHECK(g.d_mu == doctest::Approx(12.028370996860823327).epsilon(1e-12));
    CHECK(g.d_kappa == doctest::Approx(-0.0011000911803708978937).epsilon(1e-9));

    for (double mu : {0.003, 0.2, 0.7}) {
        for (double kappa : {3.0, 80.0, 15000.0}) {
            const double y = std::min(0.99, mu * 1.1);
            const auto gr = log_density_grad(BetaProp(mu, kappa), y);
            const double hm = 1e-6 * mu, hk = 1e-6 * kappa;
            const double fd_mu = (log_density(BetaProp(mu + hm, kappa), y) -
                                  log_density(BetaProp(mu - hm, kappa), y)) / (2 * hm);
            const double fd_k = (log_density(BetaProp(mu, kappa + hk), y) -
                                 log_density(BetaProp(mu, kappa - hk), y)) / (2 * hk);
            CAPTURE(mu);
            CAPTURE(kappa);
            CHECK(gr.d_mu == doctest::Approx(fd_mu).epsilon(1e-6));
            // log Gamma near 1e5 limits the difference quotient to about 1e-9.
            CHECK(std::abs(gr.d_kappa - fd_k) < 1e-5 * std::abs(fd_k) + 1e-9);
        }
    }
}

TEST_CASE("beta-proportion integrates to one with the stated moments") {
    for (double mu : {0.01, 0.2, 0.5, 0.9}) {
        for (double kappa : {10.0, 500.0, std::exp(9.92)}) {
            const BetaProp d(mu, kappa);
            const test::Moments m = test::quadrature_moments(mu, kappa);
            CAPTURE(mu);
            CAPTURE(kappa);
            CHECK(std::abs(m.mass - 1.0) < 1e-8);
            CHECK(std::abs(m.mean - d.mean()) < 1e-8);
            CHECK(std::abs(m.variance - d.variance()) / d.variance() < 1e-8);
        }
    }
}

TEST_CASE("beta-proportion sampling") {
    Rng rng(42);
    const BetaProp d(0.15, 40.0);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double y = sample(d, rng);
        REQUIRE(y > 0.0);
        REQUIRE(y < 1.0);
        sum += y;
        sum2 += y * y;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean - d.mean()) < 4 * std::sqrt(d.variance() / n));
    CHECK(var == doctest::Approx(d.variance()).epsilon(0.02));

    // Tiny shapes underflow to 0 unless retried; those draws are counted.
    long redraws = 0;
    Rng rng2(7);
    for (int i = 0; i < 1000; ++i) {
        const double y = sample(BetaProp(1e-4, 2.0), rng2, 100000, &redraws);
        REQUIRE(y > 0.0);
    }
    CHECK(redraws > 0);
}

TEST_CASE("sampling is reproducible for a seed") {
    Rng a(3), b(3);
    for (int i = 0; i < 100; ++i) CHECK(sample(BetaProp(0.4, 9.0), a) == sample(BetaProp(0.4, 9.0), b));
}
