#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "blv/data.hpp"
#include "blv/model.hpp"
#include "blv/sampler.hpp"
#include "blv/selection.hpp"

namespace blv {

/// Generating parameters, panel shape and study design of a recovery study.
///
/// JSON layout:
///   { "name": "...", "K": 2, "ages": [0, 1, 5, ...], "lengths": [3, 4, ...],
///     "first_time": [12, 11, ...],            // optional, default: all end at 14
///     "countries": ["C1", ...],               // optional
///     "parameters": { "alpha": [[...], ...],  // J rows of K loadings
///                     "beta": [...], "log_kappa": 9.0,
///                     "phi": [...], "sigma": [...] },
///     "parameter_file": "params.json",        // alternative to "parameters"
///     "replicates": 10, "k_grid": [1, 2, 3], "seed": 2024 }
struct SimulationScenario {
    std::string name = "scenario";
    int K = 1;
    std::vector<int> ages;
    std::vector<int> lengths;
    std::vector<int> first_time;
    std::vector<std::string> countries;
    BlvParameters truth;
    int replicates = 1;
    std::vector<int> k_grid;
    std::uint64_t seed = 1;

    /// Throws StructuralError or DomainError on inconsistent contents.
    void validate() const;
    [[nodiscard]] int country_count() const { return static_cast<int>(lengths.size()); }
    [[nodiscard]] int age_count() const { return static_cast<int>(ages.size()); }

    /// `base_dir` resolves a relative "parameter_file".
    static SimulationScenario from_json(const nlohmann::json& j,
                                        const std::filesystem::path& base_dir = {});
    static SimulationScenario load(const std::filesystem::path& path);
    [[nodiscard]] nlohmann::json to_json() const;
};

struct SimulatedPanel {
    MortalityPanel panel;
    Eigen::MatrixXd eps;    // rows x K
    Eigen::MatrixXd theta;  // rows x K
    Eigen::MatrixXd mu;     // rows x J
    long redraws = 0;       // beta draws that hit 0 or 1 and were repeated
};

/// Draws eps ~ N(0, I), builds theta by the AR(1) recursion, mu by the logistic
/// link and q ~ Beta-prop(mu, kappa). Replicate r uses stream (seed, simulate, r).
[[nodiscard]] SimulatedPanel simulate(const SimulationScenario& scenario, int replicate);
[[nodiscard]] MortalityPanel simulate_panel(const SimulationScenario& scenario, int replicate);

struct StudyOptions {
    SamplerConfig sampler;
    int is_samples = 100000;
    /// Concurrent cells; chains inside a cell run sequentially.
    int threads = 0;
};

struct StudyCell {
    int replicate = 0;
    int K = 0;
    SelectionRow row;  // row.complete is false when the cell failed
};

struct CoverageRecord {
    int replicate = 0;
    std::string parameter;  // phi, sigma or alpha
    std::string country;    // phi, sigma
    int age = -1;           // alpha
    int k = 0;              // alpha, 1-based
    int series_length = 0;  // phi, sigma
    double truth = 0.0;
    Summary estimate;
    [[nodiscard]] bool covered() const {
        return estimate.hpd_low <= truth && truth <= estimate.hpd_high;
    }
};

struct RecoveryReport {
    std::string scenario;
    int true_K = 0;
    std::vector<int> k_grid;
    int replicates = 0;
    std::vector<StudyCell> cells;
    std::vector<CoverageRecord> coverage;
    /// Correlation of truth-aligned posterior-mean loadings with the truth, per
    /// replicate; empty when the true-K cell failed.
    std::vector<std::optional<double>> alpha_correlation;

    [[nodiscard]] bool complete() const;
    /// K minimising the metric ("bic_m" or "waic_c") in a replicate.
    [[nodiscard]] std::optional<int> selected(int replicate, const std::string& metric) const;
    /// Count of replicates selecting each K of the grid.
    [[nodiscard]] std::map<int, int> histogram(const std::string& metric) const;
    /// Share of covered truths among records of one parameter.
    [[nodiscard]] double coverage_rate(const std::string& parameter) const;

    [[nodiscard]] std::string scoreboard_csv() const;
    [[nodiscard]] std::string cells_csv() const;
    [[nodiscard]] std::string coverage_csv() const;
    [[nodiscard]] std::string recovery_csv() const;
};

/// Fits every (replicate, K) cell, evaluates BIC_m and WAIC_c, and at the true
/// K aligns draws to the true loadings to record coverage and recovery.
[[nodiscard]] RecoveryReport run_recovery_study(const SimulationScenario& scenario,
                                                const StudyOptions& options);

}  // namespace blv
