// blv: command-line front end.
//
// Exit codes: 0 success, 2 input error, 3 convergence failure (R-hat > 1.1,
// artifacts still written), 4 internal error.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <chrono>
#include <iostream>
#include <nlohmann/json.hpp>

#include "blv/error.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
    using namespace blv::cli;
    CLI::App app{"Time-dependent beta latent variable models for mortality panels", "blv"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", BLV_VERSION);

    Overrides o;
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--threads", o.threads, "Worker threads (0 = all cores)");
    app.add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out-dir", o.out_dir, "Output directory");

    auto sampler_flags = [&o](CLI::App* c) {
        c->add_option("--chains", o.chains);
        c->add_option("--iterations", o.iterations, "Per chain, including warmup");
        c->add_option("--warmup", o.warmup);
        c->add_option("--thin", o.thin);
        c->add_option("--target-accept", o.target_accept);
        c->add_option("--max-tree-depth", o.max_tree_depth);
    };

    std::string panel_path, archive_path, scenario_path;

    auto* explore = app.add_subcommand("explore", "Kendall tau trends and age correlations");
    explore->add_option("panel", panel_path, "Panel CSV (country,time,age,qx)")->required();

    auto* fit = app.add_subcommand("fit", "Sample the posterior of one model");
    fit->add_option("panel", panel_path)->required();
    fit->add_option("-K,--K", o.K, "Latent dimensions");
    fit->add_option("--variant", o.variant, "blv or bfa");
    fit->add_flag("--varimax", o.varimax, "Varimax-rotate the aligned draws");
    fit->add_flag("--draws-csv", o.draws_csv, "Also export draws.csv");
    sampler_flags(fit);

    auto* select = app.add_subcommand("select", "Fit a range of K and compare BIC_m and WAIC_c");
    select->add_option("panel", panel_path)->required();
    select->add_option("--k-min", o.k_min);
    select->add_option("--k-max", o.k_max);
    select->add_option("--variant", o.variant);
    select->add_option("--is-samples", o.is_samples, "Importance samples per country");
    sampler_flags(select);

    auto* simulate = app.add_subcommand("simulate", "Simulate panels from a scenario");
    simulate->add_option("scenario", scenario_path)->required();
    simulate->add_option("--replicate", o.replicate, "Single replicate (default: all)");

    auto* study = app.add_subcommand("sim-study", "Recovery study over replicates and K");
    study->add_option("scenario", scenario_path)->required();
    study->add_option("--replicates", o.replicates);
    study->add_option("--k-grid", o.k_grid)->delimiter(',');
    study->add_option("--is-samples", o.is_samples);
    sampler_flags(study);

    auto* evaluate = app.add_subcommand("evaluate", "Fit metrics and selection criteria of a draw archive");
    evaluate->add_option("archive", archive_path, "Directory holding draws.json")->required();
    evaluate->add_option("panel", panel_path)->required();
    evaluate->add_option("--is-samples", o.is_samples);

    auto* report = app.add_subcommand("report", "Summary and plot tables from a draw archive");
    report->add_option("archive", archive_path)->required();
    report->add_option("panel", panel_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        const auto start = std::chrono::steady_clock::now();
        Run run(resolve(o), app.get_subcommands().front()->get_name());
        int code = kExitOk;
        if (explore->parsed()) code = cmd_explore(run, panel_path);
        if (fit->parsed()) code = cmd_fit(run, panel_path);
        if (select->parsed()) code = cmd_select(run, panel_path);
        if (simulate->parsed()) code = cmd_simulate(run, scenario_path);
        if (study->parsed()) code = cmd_sim_study(run, scenario_path);
        if (evaluate->parsed()) code = cmd_evaluate(run, archive_path, panel_path);
        if (report->parsed()) code = cmd_report(run, archive_path, panel_path);
        run.manifest.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        run.manifest.write(run.config.out_dir);
        if (code == kExitConvergence) std::cerr << "warning: not converged (R-hat > 1.1)\n";
        return code;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const blv::InitError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInternal;
    } catch (const blv::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInternal;
    } catch (const blv::Error& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}
