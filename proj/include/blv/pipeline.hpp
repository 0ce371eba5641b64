#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "blv/data.hpp"
#include "blv/diagnostics.hpp"
#include "blv/model.hpp"
#include "blv/postprocess.hpp"
#include "blv/sampler.hpp"

namespace blv {

struct FitOptions {
    int K = 1;
    Variant variant = Variant::blv;
    SamplerConfig sampler;
    PriorScales priors;
    bool varimax = false;
    double level = 0.95;
    /// Alignment target (J x K); the PCA reference when empty.
    std::optional<Eigen::MatrixXd> reference;
};

/// One row of the posterior summary table.
struct SummaryRow {
    std::string name;
    Summary summary;
    std::optional<double> r_hat;
    std::optional<double> ess;
};

/// Per-draw quantities derived from the unconstrained draws: kappa, phi, sigma
/// and theta for BLV; psi for BFA (theta is sampled directly there).
struct DerivedDraws {
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> chains;  // draws x derived
};

[[nodiscard]] DerivedDraws derive_draws(const ModelSpec& spec, const MortalityPanel& panel,
                                        const std::vector<Eigen::MatrixXd>& chains);

struct FitResult {
    ModelSpec spec;
    FitOptions options;
    std::vector<std::string> names;
    /// Aligned (and, if requested, varimax-rotated) draws, one matrix per chain.
    std::vector<Eigen::MatrixXd> chains;
    std::vector<ChainOutput> chain_info;  // sampler output with draws removed
    Eigen::MatrixXd reference;
    Eigen::MatrixXd varimax_rotation;
    MleResult intercepts;
    bool used_moment_fallback = false;
    std::vector<SummaryRow> summary;
    std::vector<GroupDiagnostics> groups;
    double max_r_hat = 1.0;

    /// True when every available R-hat is at most 1.1.
    [[nodiscard]] bool converged() const { return max_r_hat <= 1.1; }
    /// All chains stacked, chain-major.
    [[nodiscard]] Eigen::MatrixXd pooled() const;
    [[nodiscard]] int divergences() const;
};

/// initialize -> nuts_sample -> align_all -> varimax (optional) -> summaries.
[[nodiscard]] FitResult fit_model(const MortalityPanel& panel, const FitOptions& options);

/// Recomputes summaries and group diagnostics from `fit.chains`.
void summarize_fit(const MortalityPanel& panel, FitResult& fit);

/// Log density for the fit's variant, bound to the panel.
[[nodiscard]] LogDensityGradient make_target(const ModelSpec& spec, const MortalityPanel& panel);

}  // namespace blv
