#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blv/error.hpp"
#include "blv/selection.hpp"
#include "support.hpp"

using namespace blv;


TEST_CASE("importance-sampled marginal agrees with quadrature") {
    const MortalityPanel panel = test::marginal_panel();
    const BlvParameters p = test::marginal_params();
    const double exact = test::quadrature_log_marginal(panel, p);

    const std::vector<BlockProposal> blocks{{Eigen::VectorXd::Constant(1, 0.2), Eigen::MatrixXd::Constant(1, 1, 0.8)},
                                            {Eigen::VectorXd::Constant(1, -0.1), Eigen::MatrixXd::Constant(1, 1, 0.9)}};
    Rng rng(17, kTagImportance, 0);
    const CountryEstimate est = country_marginal_loglik(p, panel, 0, blocks, 100000, rng);
    CAPTURE(exact);
    CAPTURE(est.log_marginal);
    CHECK(est.std_error > 0.0);
    CHECK(std::abs(est.log_marginal - exact) < 3.0 * est.std_error);
    CHECK_FALSE(est.degenerate);
    CHECK(est.weight_ess > 1000.0);

    CHECK_THROWS_AS((void)country_marginal_loglik(p, panel, 0, {blocks[0]}, 100, rng), StructuralError);
}

TEST_CASE("marginal estimate is reproducible and thread independent") {
    Rng rng(2);
    const MortalityPanel panel = test::random_panel({3, 4, 2}, 3, rng);
    const ModelSpec spec = ModelSpec::for_panel(panel, 1);
    const ParamLayout L(spec);
    std::vector<Eigen::MatrixXd> chains(2, Eigen::MatrixXd(20, L.size()));
    for (auto& c : chains) {
        for (int s = 0; s < 20; ++s) c.row(s) = test::random_point(spec, rng, 0.3).transpose();
    }
    const PosteriorPoint pt = posterior_point(spec, chains);
    CHECK(pt.eps_cov.size() == 9);
    double kappa = 0.0;
    for (const auto& c : chains) kappa += c.col(L.log_kappa()).array().exp().sum();
    CHECK(pt.params.kappa == doctest::Approx(kappa / 40.0).epsilon(1e-14));

    const auto a = is_marginal_loglik(panel, pt, 2000, 5, 1);
    const auto b = is_marginal_loglik(panel, pt, 2000, 5, 3);
    CHECK(a.total == b.total);
    CHECK(a.countries.size() == 3);
    CHECK(a.total != is_marginal_loglik(panel, pt, 2000, 6, 1).total);
    double var = 0.0;
    for (const auto& c : a.countries) var += c.std_error * c.std_error;
    CHECK(a.total_std_error == doctest::Approx(std::sqrt(var)));
}

TEST_CASE("WAIC from pointwise log likelihoods") {
    Eigen::MatrixXd ll(4, 2);
    ll << -1.0, -2.0, -1.5, -2.5, -0.5, -3.0, -1.2, -1.0;
    const WaicResult w = waic(ll);
    // numpy: log-mean-exp and ddof=1 variance per column.
    CHECK(w.lppd == doctest::Approx(-2.821961264996818).epsilon(1e-14));
    CHECK(w.p_waic == doctest::Approx(0.9058333333333333).epsilon(1e-14));
    CHECK(w.waic == doctest::Approx(7.455589196660303).epsilon(1e-14));
    CHECK(w.observations == 2);
    CHECK(w.flagged == 1);

    WaicAccumulator acc;
    acc.add(ll.topRows(1));
    CHECK_THROWS_AS(acc.add(Eigen::MatrixXd::Zero(1, 3)), StructuralError);
    CHECK_THROWS_AS((void)WaicAccumulator().result(), InsufficientDataError);
}

TEST_CASE("information criterion and counts") {
    CHECK(bic_m(-100.0, 10.0, 50.0) == doctest::Approx(239.12023005428145).epsilon(1e-15));
    Rng rng(3);
    const MortalityPanel panel = test::random_panel({3, 4, 2}, 4, rng);
    CHECK(parameter_count(ModelSpec::for_panel(panel, 2)) == 4 * 2 + 4 + 1 + 2 * 3);
    CHECK(parameter_count(ModelSpec::for_panel(panel, 2, Variant::bfa)) == 4 * 2 + 4);
    CHECK(observation_count(panel) == 9 * 4);
}

TEST_CASE("factor-model marginal is the Gaussian likelihood at posterior means") {
    Rng rng(4);
    const MortalityPanel panel = test::random_panel({4, 5}, 3, rng);
    const ModelSpec spec = ModelSpec::for_panel(panel, 1, Variant::bfa);
    const ParamLayout L(spec);
    const Eigen::MatrixXd y = logit_transform(panel, true);
    std::vector<Eigen::MatrixXd> chains(1, Eigen::MatrixXd(2, L.size()));
    chains[0].row(0) = test::random_point(spec, rng, 0.5).transpose();
    chains[0].row(1) = test::random_point(spec, rng, 0.5).transpose();

    Eigen::MatrixXd alpha(3, 1);
    Eigen::VectorXd psi(3);
    for (int j = 0; j < 3; ++j) {
        alpha(j, 0) = 0.5 * (chains[0](0, L.alpha(j, 0)) + chains[0](1, L.alpha(j, 0)));
        psi(j) = 0.5 * (std::exp(chains[0](0, L.log_psi(j))) + std::exp(chains[0](1, L.log_psi(j))));
    }
    Eigen::MatrixXd cov = alpha * alpha.transpose();
    cov.diagonal() += psi;
    const Eigen::MatrixXd inv = cov.inverse();
    double expected = 0.0;
    for (int r = 0; r < y.rows(); ++r) {
        const Eigen::VectorXd v = y.row(r).transpose();
        expected -= 0.5 * (v.dot(inv * v) + std::log(cov.determinant()) + 3.0 * std::log(2.0 * std::numbers::pi));
    }
    CHECK(bfa_marginal_loglik(spec, y, chains) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("rank and distance metrics") {
    const Eigen::Vector3d a(1, 2, 3), b(1, 3, 2);
    CHECK(spearman(a, b) == doctest::Approx(0.5).epsilon(1e-15));
    // scipy.stats.spearmanr
    CHECK(spearman(Eigen::Vector4d(1, 2, 2, 3), Eigen::Vector4d(1, 2, 3, 4)) ==
          doctest::Approx(0.9486832980505139).epsilon(1e-14));
    Eigen::VectorXd c(5), d(5);
    c << 0.3, 0.1, 0.2, 0.9, 0.5;
    d << 2, 1, 4, 5, 3;
    CHECK(spearman(c, d) == doctest::Approx(0.7).epsilon(1e-14));
    CHECK_THROWS_AS((void)spearman(Eigen::Vector3d(1, 1, 1), a), UndefinedStatisticError);

    Eigen::MatrixXd obs(3, 2), hat(3, 2), lat(3, 1);
    obs << 0, 0, 3, 4, 0, 0;
    hat << 0, 0, 3, 0, 0, 1;
    lat << 0, 2, 1;
    CHECK(pairwise_distances(obs) == Eigen::Vector3d(5, 0, 5));
    const DistanceMetrics m = distance_metrics(obs, hat, lat);
    CHECK(m.rmse == doctest::Approx(1.671049909320106).epsilon(1e-14));
    // The zero-distance pair is left out of the percentage error.
    CHECK(m.mape == doctest::Approx(38.377223398316204).epsilon(1e-14));
    CHECK(m.cophenetic == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("fit metrics") {
    const MortalityPanel panel = test::marginal_panel();
    Eigen::MatrixXd q_hat = panel.values();
    q_hat(0, 0) = 0.05;
    q_hat(1, 1) = 0.012;
    const FitMetrics m = fit_metrics(q_hat, panel);
    CHECK(m.rmse == doctest::Approx(std::sqrt((1e-4 + 1e-6) / 4.0)).epsilon(1e-13));
    CHECK(m.mape == doctest::Approx(25.0 * (0.01 / 0.04 + 0.001 / 0.013)).epsilon(1e-13));
    CHECK_THROWS_AS((void)fit_metrics(Eigen::MatrixXd::Zero(1, 2), panel), StructuralError);
}

TEST_CASE("selection report") {
    SelectionReport rep;
    for (int K = 1; K <= 3; ++K) {
        SelectionRow r;
        r.K = K;
        r.complete = K != 2;
        r.bic_m = K == 2 ? 0.0 : 100.0 - K;
        r.waic_c = 50.0 + K;
        rep.rows.push_back(r);
    }
    rep.rows[1].error = "failed, badly";
    rep.flag_minimum();
    CHECK(rep.selected_by_bic() == 3);
    CHECK(rep.selected_by_waic() == 1);
    CHECK(rep.rows[2].min_bic);
    CHECK_FALSE(rep.rows[1].min_bic);
    const std::string csv = rep.to_csv();
    CHECK(csv.find("failed; badly") != std::string::npos);
    CHECK(rep.to_json()["rows"].size() == 3);
    CHECK_FALSE(SelectionReport().selected_by_bic().has_value());
}
