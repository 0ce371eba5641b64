#include "commands.hpp"

#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <set>

#include "blv/data.hpp"
#include "blv/draws_io.hpp"
#include "blv/error.hpp"
#include "blv/pipeline.hpp"
#include "blv/selection.hpp"
#include "blv/simulator.hpp"

namespace blv::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return fmt::format("{}", v); }
std::string num(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : "NA"; }
std::string quoted(const std::string& s) { return '"' + s + '"'; }

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

MortalityPanel read_panel(Run& run, const std::string& path) {
    if (!fs::is_regular_file(path)) throw InputError("panel file not found: " + path);
    run.input(path);
    return load_panel(path);
}

FitOptions fit_options(const RunConfig& c, int K) {
    FitOptions fo;
    fo.K = K;
    fo.variant = c.variant;
    fo.sampler = c.sampler;
    fo.priors = c.priors;
    fo.varimax = c.varimax;
    fo.level = c.level;
    return fo;
}

SelectionOptions selection_options(const RunConfig& c) {
    return {c.is_samples, c.seed, c.threads};
}

// summary, diagnostics, sampler and plot-ready long tables of a fit
void write_fit_tables(Run& run, const FitResult& fit, const MortalityPanel& panel,
                      const std::string& suffix = "") {
    std::string s = "name,mean,hpd_low,hpd_high,r_hat,ess\n";
    for (const auto& r : fit.summary) {
        s += fmt::format("{},{},{},{},{},{}\n", quoted(r.name), num(r.summary.mean),
                         num(r.summary.hpd_low), num(r.summary.hpd_high), num(r.r_hat), num(r.ess));
    }
    run.write("summary" + suffix + ".csv", s);

    s = "group,parameters,unavailable,share_r_hat_above_1.1,r_hat_p99,min_ess\n";
    for (const auto& g : fit.groups) {
        s += fmt::format("{},{},{},{},{},{}\n", g.group, g.parameters, g.unavailable,
                         num(g.share_r_hat_above), num(g.r_hat_p99), num(g.min_ess));
    }
    run.write("diagnostics" + suffix + ".csv", s);

    s = "chain,step_size,divergences,post_warmup_iterations,mean_accept_stat,mean_tree_depth,"
        "divergence_warning\n";
    for (std::size_t c = 0; c < fit.chain_info.size(); ++c) {
        const auto& info = fit.chain_info[c];
        double depth = 0.0;
        for (int d : info.tree_depth) depth += d;
        if (!info.tree_depth.empty()) depth /= static_cast<double>(info.tree_depth.size());
        s += fmt::format("{},{},{},{},{},{},{}\n", c, num(info.step_size), info.divergences,
                         info.post_warmup_iterations,
                         num(info.accept_stat.size() > 0 ? info.accept_stat.mean() : 0.0),
                         num(depth), info.divergence_warning ? 1 : 0);
    }
    run.write("sampler" + suffix + ".csv", s);

    const ParamLayout layout(fit.spec);
    const int K = layout.K();
    const auto& ages = panel.ages();
    auto row_text = [&](const Summary& v) {
        return fmt::format("{},{},{}", num(v.mean), num(v.hpd_low), num(v.hpd_high));
    };

    s = "age,k,mean,hpd_low,hpd_high\n";
    for (int x = 0; x < layout.ages(); ++x) {
        for (int k = 0; k < K; ++k) {
            s += fmt::format("{},{},{}\n", ages[x].lower_bound(), k + 1,
                             row_text(fit.summary[layout.alpha(x, k)].summary));
        }
    }
    run.write("loadings" + suffix + ".csv", s);

    const bool blv = fit.spec.variant == Variant::blv;
    const int n = layout.countries();
    // Derived columns follow the sampled ones: kappa, phi[n], sigma[n], theta for BLV.
    const int theta_at = blv ? layout.size() + 1 + 2 * n : layout.latent_offset();
    s = "country,time,k,mean,hpd_low,hpd_high\n";
    for (int i = 0; i < n; ++i) {
        const auto& series = panel.series(i);
        for (int t = 0; t < series.length(); ++t) {
            for (int k = 0; k < K; ++k) {
                const int at = theta_at + (series.row_offset + t) * K + k;
                s += fmt::format("{},{},{},{}\n", series.id, series.first_time + t, k + 1,
                                 row_text(fit.summary[at].summary));
            }
        }
    }
    run.write("latent" + suffix + ".csv", s);

    if (blv) {
        s = "country,series_length,parameter,mean,hpd_low,hpd_high\n";
        for (int i = 0; i < n; ++i) {
            const auto& series = panel.series(i);
            s += fmt::format("{},{},phi,{}\n", series.id, series.length(),
                             row_text(fit.summary[layout.size() + 1 + i].summary));
            s += fmt::format("{},{},sigma,{}\n", series.id, series.length(),
                             row_text(fit.summary[layout.size() + 1 + n + i].summary));
        }
        run.write("country" + suffix + ".csv", s);
    }
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["sampler"] = sampler.to_json();
    j["priors"] = priors_to_json(priors);
    j["model"] = {{"K", K}, {"variant", to_string(variant)}, {"varimax", varimax}, {"level", level}};
    j["select"] = {{"k_min", k_min}, {"k_max", k_max}};
    j["is_samples"] = is_samples;
    nlohmann::json study;
    if (replicates) study["replicates"] = *replicates;
    if (!k_grid.empty()) study["k_grid"] = k_grid;
    if (!study.is_null()) j["study"] = study;
    if (replicate) j["simulate"] = {{"replicate", *replicate}};
    return j;
}

RunConfig resolve(const Overrides& o) {
    RunConfig c;
    if (o.config) {
        const nlohmann::json j = read_json(*o.config);
        c.config_file = *o.config;
        if (j.contains("seed")) {
            c.seed = j["seed"].get<std::uint64_t>();
            c.seed_set = true;
        }
        c.threads = j.value("threads", c.threads);
        if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("sampler")) c.sampler = SamplerConfig::from_json(j["sampler"], c.sampler);
        if (j.contains("priors")) c.priors = priors_from_json(j["priors"], c.priors);
        if (j.contains("model")) {
            const auto& m = j["model"];
            c.K = m.value("K", c.K);
            if (m.contains("variant")) c.variant = parse_variant(m["variant"].get<std::string>());
            c.varimax = m.value("varimax", c.varimax);
            c.level = m.value("level", c.level);
        }
        if (j.contains("select")) {
            c.k_min = j["select"].value("k_min", c.k_min);
            c.k_max = j["select"].value("k_max", c.k_max);
        }
        c.is_samples = j.value("is_samples", c.is_samples);
        if (j.contains("study")) {
            const auto& s = j["study"];
            if (s.contains("replicates")) c.replicates = s["replicates"].get<int>();
            if (s.contains("k_grid")) c.k_grid = s["k_grid"].get<std::vector<int>>();
        }
        if (j.contains("simulate") && j["simulate"].contains("replicate")) {
            c.replicate = j["simulate"]["replicate"].get<int>();
        }
    }
    if (o.seed) {
        c.seed = *o.seed;
        c.seed_set = true;
    }
    if (o.threads) c.threads = *o.threads;
    if (o.out_dir) c.out_dir = *o.out_dir;
    if (o.chains) c.sampler.chains = *o.chains;
    if (o.iterations) c.sampler.iterations = *o.iterations;
    if (o.warmup) c.sampler.warmup = *o.warmup;
    if (o.thin) c.sampler.thin = *o.thin;
    if (o.max_tree_depth) c.sampler.max_tree_depth = *o.max_tree_depth;
    if (o.target_accept) c.sampler.target_accept = *o.target_accept;
    if (o.K) c.K = *o.K;
    if (o.variant) c.variant = parse_variant(*o.variant);
    if (o.varimax) c.varimax = true;
    if (o.draws_csv) c.draws_csv = true;
    if (o.k_min) c.k_min = *o.k_min;
    if (o.k_max) c.k_max = *o.k_max;
    if (o.is_samples) c.is_samples = *o.is_samples;
    if (o.replicate) c.replicate = *o.replicate;
    if (o.replicates) c.replicates = *o.replicates;
    if (!o.k_grid.empty()) c.k_grid = o.k_grid;

    c.sampler.seed = c.seed;
    c.sampler.threads = c.threads;
    c.sampler.validate();
    if (c.threads < 0) throw InputError("--threads must be >= 0");
    if (c.K < 1) throw InputError("K must be >= 1");
    if (c.k_min < 1 || c.k_max < c.k_min) throw InputError("need 1 <= k_min <= k_max");
    if (c.is_samples < 1) throw InputError("is_samples must be >= 1");
    if (!(c.level > 0.0 && c.level < 1.0)) throw InputError("level must lie in (0,1)");
    if (c.replicates && *c.replicates < 1) throw InputError("replicates must be >= 1");
    return c;
}

Run::Run(RunConfig c, std::string command) : config(std::move(c)) {
    manifest.command = std::move(command);
    manifest.config = config.to_json();
    manifest.seeds = {config.seed};
    if (config.config_file) input(*config.config_file);
    fs::create_directories(config.out_dir);
}

void Run::write(const std::string& name, const std::string& text) {
    const fs::path path = config.out_dir / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
    record(path);
}

void Run::input(const fs::path& path) { manifest.inputs.push_back(path); }

int cmd_explore(Run& run, const std::string& panel_path) {
    const MortalityPanel panel = read_panel(run, panel_path);
    const TrendTable trends = trend_table(panel);
    std::string s = "country,age,tau\n";
    for (std::size_t i = 0; i < trends.countries.size(); ++i) {
        for (std::size_t x = 0; x < trends.ages.size(); ++x) {
            s += fmt::format("{},{},{}\n", trends.countries[i], trends.ages[x].lower_bound(),
                             num(trends.tau(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(x))));
        }
    }
    run.write("kendall_tau.csv", s);

    s = "scale,age_row,age_col,r\n";
    for (const auto& [scale, label] : {std::pair{Scale::raw, "raw"}, std::pair{Scale::logit, "logit"}}) {
        const Eigen::MatrixXd r = correlation_matrix(panel, scale);
        for (int a = 0; a < panel.age_count(); ++a) {
            for (int b = 0; b < panel.age_count(); ++b) {
                s += fmt::format("{},{},{},{}\n", label, panel.ages()[a].lower_bound(),
                                 panel.ages()[b].lower_bound(), num(r(a, b)));
            }
        }
    }
    run.write("correlation.csv", s);

    const std::set<int> young{0, 1, 5, 10};
    int checked = 0, negative = 0;
    for (std::size_t x = 0; x < trends.ages.size(); ++x) {
        if (!young.contains(trends.ages[x].lower_bound())) continue;
        for (std::size_t i = 0; i < trends.countries.size(); ++i) {
            ++checked;
            if (trends.tau(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(x)) < 0.0) ++negative;
        }
    }
    std::cout << fmt::format("{} countries, {} age groups, {} periods in total\n",
                             panel.country_count(), panel.age_count(), panel.row_count());
    if (checked > 0) {
        std::cout << fmt::format("tau < 0 in {}/{} country-age cells at ages 0,1,5,10\n", negative,
                                 checked);
    }
    return kExitOk;
}

int cmd_fit(Run& run, const std::string& panel_path) {
    const MortalityPanel panel = read_panel(run, panel_path);
    const FitResult fit = fit_model(panel, fit_options(run.config, run.config.K));
    for (const auto& p : write_archive(run.config.out_dir / "draws", fit, panel)) run.record(p);
    if (run.config.draws_csv) run.write("draws.csv", draws_csv(fit.names, fit.chains));
    write_fit_tables(run, fit, panel);
    std::cout << fmt::format("K={} {}: max R-hat {:.4f}, {} divergences\n", fit.spec.K,
                             to_string(fit.spec.variant), fit.max_r_hat, fit.divergences());
    return fit.converged() ? kExitOk : kExitConvergence;
}

int cmd_select(Run& run, const std::string& panel_path) {
    const MortalityPanel panel = read_panel(run, panel_path);
    SelectionReport report;
    bool converged = true;
    for (int K = run.config.k_min; K <= run.config.k_max; ++K) {
        SelectionRow row;
        row.K = K;
        row.variant = run.config.variant;
        try {
            const FitResult fit = fit_model(panel, fit_options(run.config, K));
            write_fit_tables(run, fit, panel, fmt::format("_K{}", K));
            row = evaluate_fit(panel, fit, selection_options(run.config));
            converged = converged && fit.converged();
        } catch (const Error& e) {
            row.complete = false;
            row.error = e.what();
            converged = false;
        }
        std::cout << fmt::format("K={}: {}\n", K,
                                 row.complete ? fmt::format("BIC_m {:.3f}, WAIC_c {:.3f}",
                                                            row.bic_m, row.waic_c)
                                              : "failed: " + row.error);
        report.rows.push_back(std::move(row));
    }
    report.flag_minimum();
    run.write("selection.csv", report.to_csv());
    run.write("selection.json", report.to_json().dump(2) + "\n");

    std::string s = "K,variant,metric,value\n";
    for (const auto& r : report.rows) {
        if (!r.complete) continue;
        std::vector<std::pair<const char*, double>> metrics{
            {"bic_m", r.bic_m},   {"waic_c", r.waic_c}, {"rmse_q", r.rmse_q},
            {"mape_q", r.mape_q}, {"rmse_d", r.rmse_d}, {"mape_d", r.mape_d},
            {"cophenetic", r.cophenetic}};
        if (r.variant == Variant::blv) metrics.insert(metrics.begin(), {"log_kappa", r.log_kappa_mean});
        for (const auto& [name, v] : metrics) {
            s += fmt::format("{},{},{},{}\n", r.K, to_string(r.variant), name, num(v));
        }
    }
    run.write("selection_long.csv", s);
    if (const auto k = report.selected_by_bic()) std::cout << fmt::format("BIC_m selects K={}\n", *k);
    return converged ? kExitOk : kExitConvergence;
}

namespace {

SimulationScenario read_scenario(Run& run, const std::string& path) {
    if (!fs::is_regular_file(path)) throw InputError("scenario file not found: " + path);
    run.input(path);
    SimulationScenario sc = SimulationScenario::load(path);
    if (run.config.seed_set) sc.seed = run.config.seed;
    return sc;
}

}  // namespace

int cmd_simulate(Run& run, const std::string& scenario_path) {
    const SimulationScenario sc = read_scenario(run, scenario_path);
    int first = 0, last = sc.replicates - 1;
    if (run.config.replicate) {
        if (*run.config.replicate < 0 || *run.config.replicate >= sc.replicates) {
            throw InputError(fmt::format("replicate must lie in [0, {}]", sc.replicates - 1));
        }
        first = last = *run.config.replicate;
    }
    run.manifest.seeds = {sc.seed};
    for (int r = first; r <= last; ++r) {
        const SimulatedPanel sim = simulate(sc, r);
        run.write(fmt::format("panel_r{}.csv", r), format_panel(sim.panel));
        std::string s = "country,time,k,eps,theta\n";
        for (const auto& series : sim.panel.series()) {
            for (int t = 0; t < series.length(); ++t) {
                for (int k = 0; k < sc.K; ++k) {
                    const int row = series.row_offset + t;
                    s += fmt::format("{},{},{},{},{}\n", series.id, series.first_time + t, k + 1,
                                     num(sim.eps(row, k)), num(sim.theta(row, k)));
                }
            }
        }
        run.write(fmt::format("states_r{}.csv", r), s);
        if (sim.redraws > 0) {
            std::cout << fmt::format("replicate {}: {} beta draws at 0 or 1 were redrawn\n", r,
                                     sim.redraws);
        }
    }
    return kExitOk;
}

int cmd_sim_study(Run& run, const std::string& scenario_path) {
    SimulationScenario sc = read_scenario(run, scenario_path);
    if (run.config.replicates) sc.replicates = *run.config.replicates;
    if (!run.config.k_grid.empty()) sc.k_grid = run.config.k_grid;
    sc.validate();
    run.manifest.seeds = {sc.seed};

    StudyOptions so;
    so.sampler = run.config.sampler;
    so.is_samples = run.config.is_samples;
    so.threads = run.config.threads;
    const RecoveryReport report = run_recovery_study(sc, so);

    run.write("scoreboard.csv", report.scoreboard_csv());
    run.write("cells.csv", report.cells_csv());
    run.write("coverage.csv", report.coverage_csv());
    run.write("recovery.csv", report.recovery_csv());
    std::string s = "metric,K,count\n";
    for (const char* metric : {"bic_m", "waic_c"}) {
        for (const auto& [K, count] : report.histogram(metric)) {
            s += fmt::format("{},{},{}\n", metric, K, count);
        }
    }
    run.write("selected_k.csv", s);
    std::cout << s;
    if (!report.complete()) std::cout << "some cells failed; see cells.csv\n";
    return kExitOk;
}

int cmd_evaluate(Run& run, const std::string& archive, const std::string& panel_path) {
    const MortalityPanel panel = read_panel(run, panel_path);
    if (!fs::is_regular_file(fs::path(archive) / "draws.json")) {
        throw InputError("no draws.json in " + archive);
    }
    run.input(fs::path(archive) / "draws.json");
    const FitResult fit = read_archive(archive, panel);

    SelectionReport report;
    report.rows.push_back(evaluate_fit(panel, fit, selection_options(run.config)));
    run.write("metrics.csv", report.to_csv());

    const Eigen::MatrixXd q_hat = posterior_predict_mean(fit.spec, panel, fit.chains);
    const Eigen::MatrixXd latent = latent_mean(fit.spec, fit.chains);
    std::string s = "country,time,age,q,q_hat\n";
    for (const auto& series : panel.series()) {
        for (int t = 0; t < series.length(); ++t) {
            const int row = series.row_offset + t;
            for (int x = 0; x < panel.age_count(); ++x) {
                s += fmt::format("{},{},{},{},{}\n", series.id, series.first_time + t,
                                 panel.ages()[x].lower_bound(), num(panel.values()(row, x)),
                                 num(q_hat(row, x)));
            }
        }
    }
    run.write("fitted.csv", s);

    std::vector<std::pair<std::string, int>> label;
    for (const auto& series : panel.series()) {
        for (int t = 0; t < series.length(); ++t) label.emplace_back(series.id, series.first_time + t);
    }
    const Eigen::VectorXd d_obs = pairwise_distances(panel.values());
    const Eigen::VectorXd d_lat = pairwise_distances(latent);
    s = "country_a,time_a,country_b,time_b,observed,latent\n";
    Eigen::Index p = 0;
    for (std::size_t a = 0; a < label.size(); ++a) {
        for (std::size_t b = a + 1; b < label.size(); ++b, ++p) {
            s += fmt::format("{},{},{},{},{},{}\n", label[a].first, label[a].second, label[b].first,
                             label[b].second, num(d_obs(p)), num(d_lat(p)));
        }
    }
    run.write("distances.csv", s);
    const auto& r = report.rows.front();
    std::cout << fmt::format("BIC_m {:.3f}, WAIC_c {:.3f}, RMSE(q) {:.6g}, cophenetic {:.4f}\n",
                             r.bic_m, r.waic_c, r.rmse_q, r.cophenetic);
    return kExitOk;
}

int cmd_report(Run& run, const std::string& archive, const std::string& panel_path) {
    const MortalityPanel panel = read_panel(run, panel_path);
    if (!fs::is_regular_file(fs::path(archive) / "draws.json")) {
        throw InputError("no draws.json in " + archive);
    }
    run.input(fs::path(archive) / "draws.json");
    const FitResult fit = read_archive(archive, panel);
    write_fit_tables(run, fit, panel);
    return fit.converged() ? kExitOk : kExitConvergence;
}

}  // namespace blv::cli
