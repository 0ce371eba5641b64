#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kSource = BLV_SOURCE_DIR;
const fs::path kToy = kSource / "data" / "toy_panel.csv";

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "blv_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int blv(const std::string& args) {
    const std::string cmd = std::string(BLV_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

std::string out(const std::string& name) { return (work_dir() / name).string(); }

const std::string kQuick = " --chains 2 --iterations 1000 --warmup 500 ";

}  // namespace

TEST_CASE("exit codes") {
    CHECK(blv("--help") == 0);
    CHECK(blv("--version") == 0);
    CHECK(blv("") == 2);
    CHECK(blv("fit " + kToy.string() + " --bogus") == 2);
    CHECK(blv("fit /nonexistent/panel.csv --out-dir " + out("missing")) == 2);
    CHECK(blv("fit " + kToy.string() + " --chains 0 --out-dir " + out("zero")) == 2);
    CHECK(blv("fit " + kToy.string() + " --variant pca --out-dir " + out("variant")) == 2);

    std::ofstream(work_dir() / "bad.csv") << "country,time,age,qx\nA,1,0,0.1\nA,2,0,1.5\n";
    CHECK(blv("explore " + out("bad.csv") + " --out-dir " + out("bad")) == 2);
    std::ofstream(work_dir() / "broken.json") << "{ not json";
    CHECK(blv("fit " + kToy.string() + " --config " + out("broken.json") + " --out-dir " + out("broken")) == 2);

    // Too few iterations to converge; the tables are still written.
    CHECK(blv("fit " + kToy.string() + " --chains 2 --iterations 30 --warmup 15 --out-dir " + out("short")) == 3);
    CHECK(fs::exists(work_dir() / "short" / "summary.csv"));
    CHECK(fs::exists(work_dir() / "short" / "manifest.json"));

    // A prior this narrow puts the start point at zero density.
    std::ofstream(work_dir() / "narrow.json") << R"({"priors": {"beta_variance": 1e-320}})";
    CHECK(blv("fit " + kToy.string() + " --config " + out("narrow.json") + " --out-dir " + out("narrow")) == 4);
}

TEST_CASE("explore writes trend and correlation tables") {
    REQUIRE(blv("explore " + kToy.string() + " --out-dir " + out("explore")) == 0);
    const std::string tau = slurp(work_dir() / "explore" / "kendall_tau.csv");
    CHECK(tau.substr(0, tau.find('\n')) == "country,age,tau");
    CHECK(std::count(tau.begin(), tau.end(), '\n') == 1 + 2 * 4);
    const std::string corr = slurp(work_dir() / "explore" / "correlation.csv");
    CHECK(std::count(corr.begin(), corr.end(), '\n') == 1 + 2 * 16);
    CHECK(manifest(work_dir() / "explore")["outputs"].size() == 2);
}

TEST_CASE("config file and command line precedence") {
    std::ofstream(work_dir() / "cfg.json")
        << R"({"seed": 5, "sampler": {"chains": 3, "iterations": 200, "warmup": 100}, "model": {"K": 2}})";
    REQUIRE(blv("fit " + kToy.string() + " --config " + out("cfg.json") + " --chains 2 --out-dir " + out("cfg")) == 0);
    const auto m = manifest(work_dir() / "cfg");
    CHECK(m["config"]["sampler"]["chains"] == 2);
    CHECK(m["config"]["sampler"]["iterations"] == 200);
    CHECK(m["config"]["sampler"]["seed"] == 5);
    CHECK(m["config"]["model"]["K"] == 2);
    CHECK(m["inputs"].size() == 2);
}

TEST_CASE("repeated runs are bit identical") {
    for (const std::string run : {"rep_a", "rep_b"}) {
        const std::string threads = run == "rep_a" ? "1" : "2";
        REQUIRE(blv("fit " + kToy.string() + kQuick + "--seed 11 --threads " + threads + " --draws-csv --out-dir " +
                    out(run)) == 0);
        REQUIRE(blv("select " + kToy.string() + kQuick + "--seed 11 --k-max 2 --is-samples 5000 --out-dir " +
                    out(run + "_sel")) != 2);
        REQUIRE(blv("simulate " + (kSource / "data" / "scenarios" / "toy.json").string() + " --out-dir " +
                    out(run + "_sim")) == 0);
    }
    for (const std::string suffix : {"", "_sel", "_sim"}) {
        CAPTURE(suffix);
        const auto a = manifest(work_dir() / ("rep_a" + suffix));
        const auto b = manifest(work_dir() / ("rep_b" + suffix));
        CHECK(a["outputs"].size() > 0);
        CHECK(a["outputs"] == b["outputs"]);
    }
    CHECK(slurp(work_dir() / "rep_a" / "draws.csv") == slurp(work_dir() / "rep_b" / "draws.csv"));
}

TEST_CASE("archives feed evaluate and report") {
    const fs::path fit = work_dir() / "archive_fit";
    REQUIRE(blv("fit " + kToy.string() + kQuick + "--seed 3 --out-dir " + fit.string()) == 0);
    REQUIRE(blv("report " + (fit / "draws").string() + " " + kToy.string() + " --out-dir " + out("report")) == 0);
    CHECK(slurp(work_dir() / "report" / "summary.csv") == slurp(fit / "summary.csv"));
    CHECK(slurp(work_dir() / "report" / "loadings.csv") == slurp(fit / "loadings.csv"));

    REQUIRE(blv("evaluate " + (fit / "draws").string() + " " + kToy.string() + " --is-samples 5000 --out-dir " +
                out("evaluate")) == 0);
    for (const char* f : {"metrics.csv", "fitted.csv", "distances.csv", "manifest.json"}) {
        CAPTURE(f);
        CHECK(fs::exists(work_dir() / "evaluate" / f));
    }
    const std::string fitted = slurp(work_dir() / "evaluate" / "fitted.csv");
    CHECK(std::count(fitted.begin(), fitted.end(), '\n') == 1 + 14 * 4);

    // An archive is bound to the panel it was fitted on.
    std::ofstream(work_dir() / "other.csv") << "country,time,age,qx\nA,1,0,0.1\nA,2,0,0.2\n";
    CHECK(blv("report " + (fit / "draws").string() + " " + out("other.csv") + " --out-dir " + out("mismatch")) == 2);
}

TEST_CASE("simulate writes panels and states") {
    const std::string scen = (kSource / "data" / "scenarios" / "toy.json").string();
    REQUIRE(blv("simulate " + scen + " --replicate 0 --out-dir " + out("sim0")) == 0);
    CHECK(slurp(work_dir() / "sim0" / "panel_r0.csv") == slurp(kToy));
    CHECK(fs::exists(work_dir() / "sim0" / "states_r0.csv"));
    CHECK_FALSE(fs::exists(work_dir() / "sim0" / "panel_r1.csv"));
    CHECK(blv("simulate " + scen + " --replicate 5 --out-dir " + out("sim5")) == 2);
}
