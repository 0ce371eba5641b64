#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "blv/data.hpp"
#include "blv/error.hpp"

using namespace blv;

namespace {

// Two countries, three age groups; rows of the 4-period country are the
// correlation fixture below.
const char* kPanel =
    "country,time,age,qx\n"
    "BBB,2,0,0.010\nBBB,2,1,0.002\nBBB,2,5,0.030\n"
    "BBB,3,0,0.012\nBBB,3,1,0.0025\nBBB,3,5,0.028\n"
    "BBB,4,0,0.009\nBBB,4,1,0.0018\nBBB,4,5,0.031\n"
    "BBB,5,0,0.011\nBBB,5,1,0.0021\nBBB,5,5,0.027\n"
    "AAA,7,5,0.05\nAAA,7,0,0.02\nAAA,7,1,0.004\n"
    "AAA,8,0,0.019\nAAA,8,1,0.0035\nAAA,8,5,0.045\n";

}  // namespace

TEST_CASE("age groups") {
    CHECK(AgeGroup::standard().size() == 23);
    CHECK(AgeGroup::standard().back().lower_bound() == 105);
    CHECK_THROWS_AS(AgeGroup(3), DomainError);
    CHECK_THROWS_AS(AgeGroup(110), DomainError);
    CHECK(AgeGroup(1) < AgeGroup(5));
}

TEST_CASE("panel parsing sorts countries and stacks rows") {
    const MortalityPanel p = parse_panel(kPanel);
    REQUIRE(p.country_count() == 2);
    CHECK(p.series(0).id == "AAA");
    CHECK(p.series(0).first_time == 7);
    CHECK(p.series(0).length() == 2);
    CHECK(p.series(1).row_offset == 2);
    CHECK(p.row_count() == 6);
    CHECK(p.age_count() == 3);
    CHECK(p.value(0, 7, 2) == 0.05);
    CHECK(p.value(1, 4, 1) == 0.0018);
    CHECK(p.row_country() == std::vector<int>{0, 0, 1, 1, 1, 1});
    CHECK_THROWS_AS((void)p.row_index(0, 9), StructuralError);
}

TEST_CASE("panel text round trip is exact") {
    const MortalityPanel p = parse_panel(kPanel);
    const std::string text = format_panel(p);
    CHECK(parse_panel(text) == p);
    CHECK(format_panel(parse_panel(text)) == text);

    const auto path = std::filesystem::temp_directory_path() / "blv_test_panel.csv";
    write_panel(p, path);
    CHECK(load_panel(path) == p);
    std::filesystem::remove(path);
}

TEST_CASE("panel validation") {
    const std::string header = "country,time,age,qx\n";
    CHECK_THROWS_AS((void)parse_panel(""), ParseError);
    CHECK_THROWS_AS((void)parse_panel("a,b\n"), ParseError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,1,0\n"), ParseError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,x,0,0.1\nA,2,0,0.1\n"), ParseError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,1,0,0\nA,2,0,0.1\n"), DomainError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,1,0,1.0\nA,2,0,0.1\n"), DomainError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,1,3,0.1\nA,2,3,0.1\n"), ParseError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,1,0,0.1\nA,3,0,0.1\n"), ContiguityError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,1,0,0.1\n"), ContiguityError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,1,0,0.1\nA,1,0,0.2\nA,2,0,0.1\n"), StructuralError);
    CHECK_THROWS_AS((void)parse_panel(header + "A,1,0,0.1\nA,2,0,0.1\nA,2,1,0.1\n"), StructuralError);
    CHECK_THROWS_AS((void)load_panel("/nonexistent/panel.csv"), Error);

    try {
        (void)parse_panel(header + "A,1,0,0.1\nA,2,0,oops\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("kendall tau") {
    const std::vector<double> inc{1, 2, 3, 4, 5}, dec{5, 4, 3, 2, 1}, small{1, 3, 2};
    CHECK(kendall_tau(inc) == 1.0);
    CHECK(kendall_tau(dec) == -1.0);
    CHECK(kendall_tau(small) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    // scipy.stats.kendalltau against the time index.
    const std::vector<double> mixed{0.5, 0.2, 0.9, 0.1, 0.7, 0.3};
    CHECK(kendall_tau(mixed) == doctest::Approx(-0.06666666666666665).epsilon(1e-14));
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS((void)kendall_tau(one), InsufficientDataError);
}

TEST_CASE("trend table on monotone series") {
    std::vector<MortalityPanel::Entry> e;
    for (int t = 0; t < 6; ++t) {
        e.push_back({"X", 2000 + t, 0, 0.05 - 0.005 * t});
        e.push_back({"X", 2000 + t, 60, 0.01 + 0.001 * t});
        e.push_back({"Y", 1990 + t, 0, 0.03 * std::pow(0.9, t)});
        e.push_back({"Y", 1990 + t, 60, 0.2 + 0.01 * t});
    }
    const TrendTable tt = trend_table(MortalityPanel::from_entries(e));
    CHECK(tt.countries == std::vector<std::string>{"X", "Y"});
    CHECK(tt.tau(0, 0) == -1.0);
    CHECK(tt.tau(0, 1) == 1.0);
    CHECK(tt.tau(1, 0) == -1.0);
    CHECK(tt.tau(1, 1) == 1.0);
}

TEST_CASE("correlation matrix matches numpy") {
    std::vector<MortalityPanel::Entry> e;
    const double q[4][3] = {{0.010, 0.002, 0.030}, {0.012, 0.0025, 0.028},
                            {0.009, 0.0018, 0.031}, {0.011, 0.0021, 0.027}};
    const int ages[3] = {0, 1, 5};
    for (int t = 0; t < 4; ++t) {
        for (int j = 0; j < 3; ++j) e.push_back({"Z", t, ages[j], q[t][j]});
    }
    const MortalityPanel p = MortalityPanel::from_entries(e);
    const Eigen::MatrixXd raw = correlation_matrix(p, Scale::raw);
    CHECK(raw(0, 1) == doctest::Approx(0.964763821237732).epsilon(1e-13));
    CHECK(raw(0, 2) == doctest::Approx(-0.8485281374238568).epsilon(1e-13));
    CHECK(raw(2, 1) == doctest::Approx(-0.6821910402406461).epsilon(1e-13));
    CHECK(raw(1, 1) == 1.0);
    const Eigen::MatrixXd lg = correlation_matrix(p, Scale::logit);
    CHECK(lg(0, 1) == doctest::Approx(0.9676520020289175).epsilon(1e-13));
    CHECK(lg(0, 2) == doctest::Approx(-0.8530360819254372).epsilon(1e-13));
    CHECK(lg(1, 2) == doctest::Approx(-0.698353765107048).epsilon(1e-13));
    CHECK(raw.isApprox(raw.transpose(), 0.0));

    std::vector<MortalityPanel::Entry> flat{{"Z", 0, 0, 0.1}, {"Z", 1, 0, 0.1}, {"Z", 0, 1, 0.2},
                                            {"Z", 1, 1, 0.3}};
    CHECK_THROWS_AS((void)correlation_matrix(MortalityPanel::from_entries(flat), Scale::raw),
                    UndefinedStatisticError);
}

TEST_CASE("logit transform") {
    const MortalityPanel p = parse_panel(kPanel);
    const Eigen::MatrixXd y = logit_transform(p, false);
    CHECK(y(0, 0) == doctest::Approx(std::log(0.02 / 0.98)).epsilon(1e-15));
    const Eigen::MatrixXd c = logit_transform(p, true);
    CHECK(c.colwise().mean().cwiseAbs().maxCoeff() < 1e-14);
    CHECK((y - c).row(0).isApprox((y - c).row(5), 1e-14));
}
