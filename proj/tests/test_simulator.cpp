#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "blv/distributions.hpp"
#include "blv/error.hpp"
#include "blv/simulator.hpp"

using namespace blv;

namespace {

const std::filesystem::path kScenarios = std::filesystem::path(BLV_SOURCE_DIR) / "data" / "scenarios";

nlohmann::json small_json() {
    return {{"name", "small"},
            {"K", 1},
            {"ages", {0, 60}},
            {"lengths", {5}},
            {"parameters",
             {{"alpha", {{0.5}, {0.3}}},
              {"beta", {-3.0, -2.0}},
              {"log_kappa", 6.0},
              {"phi", {0.7}},
              {"sigma", {0.4}}}},
            {"replicates", 1},
            {"k_grid", {1}},
            {"seed", 3}};
}

}  // namespace

TEST_CASE("scenario files load and round trip") {
    const SimulationScenario toy = SimulationScenario::load(kScenarios / "toy.json");
    CHECK(toy.country_count() == 2);
    CHECK(toy.first_time == std::vector<int>{3, 1});
    CHECK(toy.truth.kappa == doctest::Approx(std::exp(8.0)));
    const SimulationScenario back = SimulationScenario::from_json(toy.to_json());
    CHECK(back.to_json() == toy.to_json());

    const SimulationScenario desk = SimulationScenario::load(kScenarios / "desk.json");
    CHECK(desk.K == 2);
    CHECK(desk.country_count() == 8);
    CHECK(desk.age_count() == 10);
    CHECK(desk.replicates == 10);
    CHECK(desk.k_grid == std::vector<int>{1, 2, 3});
}

TEST_CASE("scenario validation") {
    auto bad = [](auto&& edit) {
        nlohmann::json j = small_json();
        edit(j);
        return j;
    };
    CHECK_NOTHROW((void)SimulationScenario::from_json(small_json()));
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j["parameters"]["phi"] = {1.0}; })),
                    DomainError);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j["parameters"]["sigma"] = {0.0}; })),
                    DomainError);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j["K"] = 3; })), StructuralError);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j["k_grid"] = {1, 5}; })),
                    StructuralError);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j["lengths"] = {1}; })),
                    StructuralError);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j["ages"] = {60, 0}; })),
                    StructuralError);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j["ages"] = {0, 3}; })), DomainError);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) {
                        j["lengths"] = {5, 5};
                        j["countries"] = {"X", "X"};
                        j["parameters"]["phi"] = {0.1, 0.2};
                        j["parameters"]["sigma"] = {0.1, 0.2};
                    })),
                    StructuralError);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j["parameters"].erase("beta"); })),
                    nlohmann::json::exception);
    CHECK_THROWS_AS((void)SimulationScenario::from_json(bad([](auto& j) { j.erase("parameters"); })),
                    StructuralError);
    CHECK_THROWS_AS((void)SimulationScenario::load("/nonexistent/scenario.json"), Error);
}

TEST_CASE("simulation follows the generative recursion") {
    const SimulationScenario toy = SimulationScenario::load(kScenarios / "toy.json");
    const SimulatedPanel sim = simulate(toy, 0);
    const MortalityPanel& p = sim.panel;
    REQUIRE(p.country_count() == 2);
    CHECK(p.series(0).id == "AAA");
    CHECK(p.series(1).length() == 8);
    CHECK(p.series(1).first_time == 1);
    for (int i = 0; i < 2; ++i) {
        const auto& s = p.series(i);
        const Eigen::MatrixXd theta =
            country_states(toy.truth.phi(i), toy.truth.sigma(i), sim.eps.middleRows(s.row_offset, s.length()));
        CHECK(theta.isApprox(sim.theta.middleRows(s.row_offset, s.length()), 1e-14));
    }
    Eigen::MatrixXd eta = sim.theta * toy.truth.alpha.transpose();
    eta.rowwise() += toy.truth.beta.transpose();
    CHECK((eta.unaryExpr([](double e) { return blv::logistic(e); }) - sim.mu).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(p.values().minCoeff() > 0.0);
    CHECK(p.values().maxCoeff() < 1.0);

    CHECK(simulate_panel(toy, 0) == p);
    CHECK_FALSE(simulate_panel(toy, 1) == p);
}

TEST_CASE("stored toy panel is replicate zero") {
    const SimulationScenario toy = SimulationScenario::load(kScenarios / "toy.json");
    const MortalityPanel stored = load_panel(std::filesystem::path(BLV_SOURCE_DIR) / "data" / "toy_panel.csv");
    CHECK(stored == simulate_panel(toy, 0));
}

TEST_CASE("latent states have the stationary variance") {
    SimulationScenario s = SimulationScenario::from_json(small_json());
    const int R = 4000;
    Eigen::MatrixXd theta(R, 5);
    for (int r = 0; r < R; ++r) theta.row(r) = simulate(s, r).theta.col(0).transpose();
    const double target = 0.4 * 0.4 / (1.0 - 0.7 * 0.7);
    const double se = target * std::sqrt(2.0 / (R - 1));
    for (int t : {0, 2, 4}) {
        CAPTURE(t);
        const Eigen::VectorXd v = theta.col(t);
        const double var = (v.array() - v.mean()).square().sum() / (R - 1);
        CHECK(std::abs(var - target) < 3.0 * se);
        CHECK(std::abs(v.mean()) < 3.0 * std::sqrt(target / R));
    }
    // Lag-one correlation is phi.
    const Eigen::VectorXd a = theta.col(3).array() - theta.col(3).mean();
    const Eigen::VectorXd b = theta.col(4).array() - theta.col(4).mean();
    CHECK(a.dot(b) / (a.norm() * b.norm()) == doctest::Approx(0.7).epsilon(0.05));
}

TEST_CASE("degenerate shapes are redrawn and counted") {
    nlohmann::json j = small_json();
    j["parameters"]["beta"] = {-11.0, -10.0};
    j["parameters"]["log_kappa"] = 0.5;
    const SimulatedPanel sim = simulate(SimulationScenario::from_json(j), 0);
    CHECK(sim.redraws > 0);
    CHECK(sim.panel.values().minCoeff() > 0.0);
}

TEST_CASE("single-replicate recovery study") {
    SimulationScenario toy = SimulationScenario::load(kScenarios / "toy.json");
    toy.replicates = 1;
    StudyOptions opt;
    opt.sampler.chains = 2;
    opt.sampler.iterations = 300;
    opt.sampler.warmup = 150;
    opt.is_samples = 2000;
    opt.threads = 1;
    const RecoveryReport rep = run_recovery_study(toy, opt);
    REQUIRE(rep.cells.size() == 2);
    CHECK(rep.complete());
    CHECK(rep.selected(0, "bic_m").has_value());
    const auto hist = rep.histogram("bic_m");
    int total = 0;
    for (const auto& [K, count] : hist) total += count;
    CHECK(total == 1);
    // phi and sigma for each country plus every loading at the true K.
    CHECK(rep.coverage.size() == 2 * 2 + 4);
    REQUIRE(rep.alpha_correlation.size() == 1);
    CHECK(rep.alpha_correlation[0].has_value());
    const double rate = rep.coverage_rate("alpha");
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
    CHECK(rep.scoreboard_csv().find("bic_m") != std::string::npos);
    CHECK(rep.cells_csv().substr(0, 10) == "replicate,");

    const RecoveryReport again = run_recovery_study(toy, opt);
    CHECK(again.cells_csv() == rep.cells_csv());
    CHECK(again.coverage_csv() == rep.coverage_csv());
}
