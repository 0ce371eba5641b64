#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "blv/draws_io.hpp"
#include "blv/error.hpp"
#include "support.hpp"

using namespace blv;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("blv_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

FitResult small_fit(const MortalityPanel& panel, Variant variant) {
    FitOptions fo;
    fo.K = 2;
    fo.variant = variant;
    fo.varimax = true;
    fo.sampler.chains = 2;
    fo.sampler.iterations = 120;
    fo.sampler.warmup = 60;
    fo.sampler.seed = 3;
    fo.sampler.threads = 1;
    return fit_model(panel, fo);
}

}  // namespace

TEST_CASE("binary chains round trip exactly") {
    const auto dir = scratch("chain");
    Rng rng(1);
    Eigen::MatrixXd m(7, 3);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * 1e5;
    m(2, 1) = -0.0;
    write_chain(dir / "c.bin", m);
    CHECK(read_chain(dir / "c.bin") == m);

    std::ofstream(dir / "bad.bin") << "NOTDRAWS0123456789";
    CHECK_THROWS_AS((void)read_chain(dir / "bad.bin"), ParseError);
    const auto size = std::filesystem::file_size(dir / "c.bin");
    std::filesystem::copy_file(dir / "c.bin", dir / "short.bin");
    std::filesystem::resize_file(dir / "short.bin", size - 8);
    CHECK_THROWS_AS((void)read_chain(dir / "short.bin"), ParseError);
    CHECK_THROWS_AS((void)read_chain(dir / "missing.bin"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("archives restore the fit") {
    Rng rng(2);
    const MortalityPanel panel = test::random_panel({4, 5}, 4, rng);
    for (Variant v : {Variant::blv, Variant::bfa}) {
        const auto dir = scratch("archive");
        const FitResult fit = small_fit(panel, v);
        const auto files = write_archive(dir, fit, panel);
        CHECK(files.size() == 3);
        const FitResult back = read_archive(dir, panel);
        CHECK(back.spec.K == 2);
        CHECK(back.spec.variant == v);
        CHECK(back.names == fit.names);
        REQUIRE(back.chains.size() == 2);
        CHECK(back.chains[1] == fit.chains[1]);
        CHECK(back.reference == fit.reference);
        CHECK(back.varimax_rotation == fit.varimax_rotation);
        CHECK(back.chain_info[0].step_size == fit.chain_info[0].step_size);
        CHECK(back.chain_info[1].inv_metric == fit.chain_info[1].inv_metric);
        CHECK(back.max_r_hat == fit.max_r_hat);
        REQUIRE(back.summary.size() == fit.summary.size());
        CHECK(back.summary[3].summary.mean == fit.summary[3].summary.mean);
        CHECK(archive_header(back, panel) == archive_header(fit, panel));

        const MortalityPanel other = test::random_panel({4, 6}, 4, rng);
        CHECK_THROWS_AS((void)read_archive(dir, other), StructuralError);
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("draws csv and parameter vectors") {
    const std::vector<std::string> names{"a", "b[x=1,k=1]"};
    std::vector<Eigen::MatrixXd> chains(2, Eigen::MatrixXd::Zero(2, 2));
    chains[1](1, 0) = 0.5;
    const std::string csv = draws_csv(names, chains);
    CHECK(csv.substr(0, csv.find('\n')) == "chain,draw,\"a\",\"b[x=1,k=1]\"");
    CHECK(csv.find("\n1,1,0.5,0\n") != std::string::npos);

    Rng rng(4);
    const MortalityPanel panel = test::random_panel({3, 3}, 3, rng);
    const ModelSpec spec = ModelSpec::for_panel(panel, 1);
    ParamVector pv(spec);
    pv.values = test::random_point(spec, rng);
    const nlohmann::json j = param_vector_json(pv, panel);
    CHECK(param_vector_from_json(j, spec).values == pv.values);
    CHECK_THROWS_AS((void)param_vector_from_json(j, ModelSpec::for_panel(panel, 2)), StructuralError);

    PriorScales pr;
    pr.beta_variance = 25.0;
    CHECK(priors_from_json(priors_to_json(pr)).beta_variance == 25.0);
    CHECK_THROWS_AS((void)priors_from_json({{"alpha_variance", -1.0}}), Error);
}
