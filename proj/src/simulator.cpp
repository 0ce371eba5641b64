#include "blv/simulator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "blv/distributions.hpp"
#include "blv/error.hpp"
#include "blv/parallel.hpp"
#include "blv/pipeline.hpp"
#include "blv/postprocess.hpp"

namespace blv {

void SimulationScenario::validate() const {
    const int n = country_count();
    const int J = age_count();
    if (n < 1 || J < 1) throw StructuralError("scenario needs at least one country and age group");
    if (K < 1 || K > J) throw StructuralError(fmt::format("scenario K={} outside [1, {}]", K, J));
    for (int a : ages) AgeGroup check(a);
    if (!std::is_sorted(ages.begin(), ages.end()) ||
        std::adjacent_find(ages.begin(), ages.end()) != ages.end()) {
        throw StructuralError("scenario ages must be strictly increasing");
    }
    for (int len : lengths) {
        if (len < 2) throw StructuralError("every scenario country needs at least 2 periods");
    }
    if (static_cast<int>(first_time.size()) != n || static_cast<int>(countries.size()) != n) {
        throw StructuralError("scenario first_time/countries do not match lengths");
    }
    std::vector<std::string> ids = countries;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw StructuralError("scenario country names must be unique");
    }
    if (truth.alpha.rows() != J || truth.alpha.cols() != K || truth.beta.size() != J ||
        truth.phi.size() != n || truth.sigma.size() != n) {
        throw StructuralError("scenario parameters do not match its shape");
    }
    if (!(truth.kappa > 0.0) || !std::isfinite(truth.kappa)) {
        throw DomainError("scenario kappa must be positive and finite");
    }
    for (int i = 0; i < n; ++i) {
        if (!(std::abs(truth.phi(i)) < 1.0)) throw DomainError("scenario phi must lie in (-1, 1)");
        if (!(truth.sigma(i) > 0.0)) throw DomainError("scenario sigma must be positive");
    }
    if (replicates < 1) throw StructuralError("scenario needs at least one replicate");
    if (k_grid.empty()) throw StructuralError("scenario K grid is empty");
    for (int k : k_grid) {
        if (k < 1 || k > J) throw StructuralError(fmt::format("grid K={} outside [1, {}]", k, J));
    }
}

namespace {

Eigen::VectorXd to_vector(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> from_vector(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

}  // namespace

SimulationScenario SimulationScenario::from_json(const nlohmann::json& j,
                                                 const std::filesystem::path& base_dir) {
    SimulationScenario s;
    s.name = j.value("name", s.name);
    s.K = j.at("K").get<int>();
    s.ages = j.at("ages").get<std::vector<int>>();
    s.lengths = j.at("lengths").get<std::vector<int>>();
    const int n = s.country_count();
    if (j.contains("first_time")) {
        s.first_time = j.at("first_time").get<std::vector<int>>();
    } else {
        const int last = *std::max_element(s.lengths.begin(), s.lengths.end());
        for (int len : s.lengths) s.first_time.push_back(last - len + 1);
    }
    if (j.contains("countries")) {
        s.countries = j.at("countries").get<std::vector<std::string>>();
    } else {
        for (int i = 0; i < n; ++i) s.countries.push_back(fmt::format("C{:02}", i + 1));
    }

    nlohmann::json p;
    if (j.contains("parameters")) {
        p = j.at("parameters");
    } else if (j.contains("parameter_file")) {
        std::filesystem::path file = j.at("parameter_file").get<std::string>();
        if (file.is_relative()) file = base_dir / file;
        std::ifstream in(file);
        if (!in) throw Error("cannot open parameter file " + file.string());
        p = nlohmann::json::parse(in);
    } else {
        throw StructuralError("scenario needs \"parameters\" or \"parameter_file\"");
    }
    const auto alpha = p.at("alpha").get<std::vector<std::vector<double>>>();
    s.truth.alpha.resize(static_cast<Eigen::Index>(alpha.size()), s.K);
    for (std::size_t x = 0; x < alpha.size(); ++x) {
        if (static_cast<int>(alpha[x].size()) != s.K) {
            throw StructuralError(fmt::format("alpha row {} has {} entries, expected {}", x,
                                              alpha[x].size(), s.K));
        }
        for (int k = 0; k < s.K; ++k) s.truth.alpha(static_cast<Eigen::Index>(x), k) = alpha[x][k];
    }
    s.truth.beta = to_vector(p.at("beta"));
    s.truth.kappa = std::exp(p.at("log_kappa").get<double>());
    s.truth.phi = to_vector(p.at("phi"));
    s.truth.sigma = to_vector(p.at("sigma"));

    s.replicates = j.value("replicates", 1);
    s.k_grid = j.contains("k_grid") ? j.at("k_grid").get<std::vector<int>>() : std::vector<int>{s.K};
    s.seed = j.value("seed", std::uint64_t{1});
    s.validate();
    return s;
}

SimulationScenario SimulationScenario::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario file " + path.string());
    return from_json(nlohmann::json::parse(in), path.parent_path());
}

nlohmann::json SimulationScenario::to_json() const {
    std::vector<std::vector<double>> alpha(truth.alpha.rows(), std::vector<double>(K));
    for (Eigen::Index x = 0; x < truth.alpha.rows(); ++x) {
        for (int k = 0; k < K; ++k) alpha[x][k] = truth.alpha(x, k);
    }
    return {{"name", name},
            {"K", K},
            {"ages", ages},
            {"lengths", lengths},
            {"first_time", first_time},
            {"countries", countries},
            {"parameters",
             {{"alpha", alpha},
              {"beta", from_vector(truth.beta)},
              {"log_kappa", std::log(truth.kappa)},
              {"phi", from_vector(truth.phi)},
              {"sigma", from_vector(truth.sigma)}}},
            {"replicates", replicates},
            {"k_grid", k_grid},
            {"seed", seed}};
}

SimulatedPanel simulate(const SimulationScenario& scenario, int replicate) {
    scenario.validate();
    const int n = scenario.country_count();
    const int J = scenario.age_count();
    const int K = scenario.K;
    int rows = 0;
    for (int len : scenario.lengths) rows += len;

    Rng rng(scenario.seed, kTagSimulate, static_cast<std::uint64_t>(replicate));
    SimulatedPanel out;
    out.eps.resize(rows, K);
    out.theta.resize(rows, K);
    out.mu.resize(rows, J);
    std::vector<MortalityPanel::Entry> entries;
    entries.reserve(static_cast<std::size_t>(rows) * J);

    // Countries are simulated in identifier order, the panel's row order.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return scenario.countries[a] < scenario.countries[b];
    });

    int offset = 0;
    for (int i : order) {
        const int len = scenario.lengths[i];
        for (int t = 0; t < len; ++t) {
            for (int k = 0; k < K; ++k) out.eps(offset + t, k) = rng.normal();
        }
        out.theta.middleRows(offset, len) =
            country_states(scenario.truth.phi(i), scenario.truth.sigma(i),
                           out.eps.middleRows(offset, len));
        for (int t = 0; t < len; ++t) {
            for (int x = 0; x < J; ++x) {
                const double mu = logistic(scenario.truth.beta(x) +
                                           scenario.truth.alpha.row(x).dot(out.theta.row(offset + t)));
                out.mu(offset + t, x) = mu;
                const BetaProp dist(std::clamp(mu, 1e-12, 1.0 - 1e-12), scenario.truth.kappa);
                const double q = sample(dist, rng, 100, &out.redraws);
                entries.push_back(
                    {scenario.countries[i], scenario.first_time[i] + t, scenario.ages[x], q});
            }
        }
        offset += len;
    }
    out.panel = MortalityPanel::from_entries(entries);
    return out;
}

MortalityPanel simulate_panel(const SimulationScenario& scenario, int replicate) {
    return simulate(scenario, replicate).panel;
}

bool RecoveryReport::complete() const {
    return std::all_of(cells.begin(), cells.end(),
                       [](const StudyCell& c) { return c.row.complete; });
}

std::optional<int> RecoveryReport::selected(int replicate, const std::string& metric) const {
    SelectionReport rep;
    for (const auto& c : cells) {
        if (c.replicate == replicate) rep.rows.push_back(c.row);
    }
    if (metric == "bic_m") return rep.selected_by_bic();
    if (metric == "waic_c") return rep.selected_by_waic();
    throw std::invalid_argument("unknown selection metric " + metric);
}

std::map<int, int> RecoveryReport::histogram(const std::string& metric) const {
    std::map<int, int> h;
    for (int k : k_grid) h[k] = 0;
    for (int r = 0; r < replicates; ++r) {
        if (const auto k = selected(r, metric)) ++h[*k];
    }
    return h;
}

double RecoveryReport::coverage_rate(const std::string& parameter) const {
    int total = 0, hit = 0;
    for (const auto& c : coverage) {
        if (c.parameter != parameter) continue;
        ++total;
        hit += c.covered() ? 1 : 0;
    }
    return total > 0 ? static_cast<double>(hit) / total : 0.0;
}

std::string RecoveryReport::scoreboard_csv() const {
    std::string out = "selected_K,bic_m,waic_c\n";
    const auto bic = histogram("bic_m");
    const auto waic = histogram("waic_c");
    for (int k : k_grid) out += fmt::format("{},{},{}\n", k, bic.at(k), waic.at(k));
    return out;
}

std::string RecoveryReport::cells_csv() const {
    std::string out =
        "replicate,K,complete,bic_m,waic_c,log_kappa_mean,log_marginal_se,max_r_hat,"
        "divergences,error\n";
    for (const auto& c : cells) {
        std::string err = c.row.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        if (c.row.complete) {
            out += fmt::format("{},{},1,{},{},{},{},{},{},\n", c.replicate, c.K, c.row.bic_m,
                               c.row.waic_c, c.row.log_kappa_mean, c.row.log_marginal_se,
                               c.row.max_r_hat, c.row.divergences);
        } else {
            out += fmt::format("{},{},0,,,,,,,{}\n", c.replicate, c.K, err);
        }
    }
    return out;
}

std::string RecoveryReport::coverage_csv() const {
    std::string out =
        "replicate,parameter,country,age,k,series_length,truth,mean,hpd_low,hpd_high,covered\n";
    for (const auto& c : coverage) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", c.replicate, c.parameter,
                           c.country, c.age >= 0 ? fmt::format("{}", c.age) : std::string(),
                           c.k > 0 ? fmt::format("{}", c.k) : std::string(),
                           c.series_length > 0 ? fmt::format("{}", c.series_length) : std::string(),
                           c.truth, c.estimate.mean, c.estimate.hpd_low, c.estimate.hpd_high,
                           c.covered() ? 1 : 0);
    }
    return out;
}

std::string RecoveryReport::recovery_csv() const {
    std::string out = "replicate,alpha_correlation,selected_bic_m,selected_waic_c\n";
    for (int r = 0; r < replicates; ++r) {
        const auto& a = alpha_correlation[r];
        const auto b = selected(r, "bic_m");
        const auto w = selected(r, "waic_c");
        out += fmt::format("{},{},{},{}\n", r, a ? fmt::format("{}", *a) : std::string(),
                           b ? fmt::format("{}", *b) : std::string(),
                           w ? fmt::format("{}", *w) : std::string());
    }
    return out;
}

namespace {

struct CellOutcome {
    SelectionRow row;
    std::vector<CoverageRecord> coverage;
    std::optional<double> alpha_correlation;
};

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ca = a.array() - a.mean();
    const Eigen::VectorXd cb = b.array() - b.mean();
    return ca.dot(cb) / (ca.norm() * cb.norm());
}

CellOutcome run_cell(const SimulationScenario& scenario, const StudyOptions& options, int replicate,
                     int K) {
    CellOutcome out;
    out.row.K = K;
    const MortalityPanel panel = simulate_panel(scenario, replicate);
    const std::uint64_t cell = static_cast<std::uint64_t>(replicate) * 64 + K;

    FitOptions fo;
    fo.K = K;
    fo.sampler = options.sampler;
    fo.sampler.seed = derive_seed(scenario.seed, kTagStudy, cell);
    fo.sampler.threads = 1;
    FitResult fit = fit_model(panel, fo);

    SelectionOptions so;
    so.is_samples = options.is_samples;
    so.seed = derive_seed(scenario.seed, kTagStudy, cell | (std::uint64_t{1} << 40));
    so.threads = 1;
    out.row = evaluate_fit(panel, fit, so);

    if (K != scenario.K) return out;

    // Truth-aligned recovery at the generating dimension.
    const ParamLayout layout(fit.spec);
    align_all(layout, scenario.truth.alpha, fit.chains);
    const Eigen::MatrixXd pooled = fit.pooled();
    const DerivedDraws derived = derive_draws(fit.spec, panel, fit.chains);
    Eigen::MatrixXd dpooled(pooled.rows(), static_cast<Eigen::Index>(derived.names.size()));
    Eigen::Index at = 0;
    for (const auto& c : derived.chains) {
        dpooled.middleRows(at, c.rows()) = c;
        at += c.rows();
    }
    auto summary_of = [&](const Eigen::MatrixXd& m, Eigen::Index col) {
        const Eigen::VectorXd v = m.col(col);
        return summarize({v.data(), static_cast<std::size_t>(v.size())});
    };

    const int n = panel.country_count();
    for (int i = 0; i < n; ++i) {
        const auto& s = panel.series(i);
        const auto idx = static_cast<std::size_t>(
            std::find(scenario.countries.begin(), scenario.countries.end(), s.id) -
            scenario.countries.begin());
        CoverageRecord phi{replicate, "phi", s.id, -1, 0, s.length(), scenario.truth.phi(idx),
                           summary_of(dpooled, 1 + i)};
        CoverageRecord sigma{replicate, "sigma", s.id, -1, 0, s.length(),
                             scenario.truth.sigma(idx), summary_of(dpooled, 1 + n + i)};
        out.coverage.push_back(phi);
        out.coverage.push_back(sigma);
    }
    Eigen::VectorXd est(layout.ages() * K), tru(layout.ages() * K);
    for (int x = 0; x < layout.ages(); ++x) {
        for (int k = 0; k < K; ++k) {
            const Summary s = summary_of(pooled, layout.alpha(x, k));
            out.coverage.push_back({replicate, "alpha", "", panel.ages()[x].lower_bound(), k + 1, 0,
                                    scenario.truth.alpha(x, k), s});
            est(x * K + k) = s.mean;
            tru(x * K + k) = scenario.truth.alpha(x, k);
        }
    }
    out.alpha_correlation = correlation(est, tru);
    return out;
}

}  // namespace

RecoveryReport run_recovery_study(const SimulationScenario& scenario, const StudyOptions& options) {
    scenario.validate();
    options.sampler.validate();
    RecoveryReport report;
    report.scenario = scenario.name;
    report.true_K = scenario.K;
    report.k_grid = scenario.k_grid;
    report.replicates = scenario.replicates;

    const int grid = static_cast<int>(scenario.k_grid.size());
    const int jobs = scenario.replicates * grid;
    std::vector<CellOutcome> outcomes(jobs);
    parallel_for(jobs, options.threads, [&](int job) {
        const int r = job / grid;
        const int K = scenario.k_grid[job % grid];
        try {
            outcomes[job] = run_cell(scenario, options, r, K);
        } catch (const std::exception& e) {
            outcomes[job] = CellOutcome{};
            outcomes[job].row.K = K;
            outcomes[job].row.complete = false;
            outcomes[job].row.error = e.what();
        }
    });

    report.alpha_correlation.assign(scenario.replicates, std::nullopt);
    for (int job = 0; job < jobs; ++job) {
        const int r = job / grid;
        auto& o = outcomes[job];
        report.cells.push_back({r, o.row.K, o.row});
        report.coverage.insert(report.coverage.end(), o.coverage.begin(), o.coverage.end());
        if (o.alpha_correlation) report.alpha_correlation[r] = o.alpha_correlation;
    }
    return report;
}

}  // namespace blv
