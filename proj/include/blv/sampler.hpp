#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "blv/rng.hpp"

namespace blv {

/// Returns log p(x) and writes its gradient; must be safe to call concurrently.
using LogDensityGradient = std::function<double(std::span<const double>, std::span<double>)>;

struct SamplerConfig {
    int chains = 4;
    int iterations = 2000;  // per chain, including warmup
    int warmup = 1000;
    int thin = 1;
    std::uint64_t seed = 1;
    double target_accept = 0.8;
    int max_tree_depth = 10;
    /// Energy error above which a transition is flagged divergent.
    double max_energy_error = 1000.0;
    /// Worker threads for chains; 0 uses the hardware concurrency.
    int threads = 0;

    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
    [[nodiscard]] int draws_per_chain() const { return (iterations - warmup) / thin; }
    [[nodiscard]] nlohmann::json to_json() const;
    static SamplerConfig from_json(const nlohmann::json& j, SamplerConfig defaults);
    static SamplerConfig from_json(const nlohmann::json& j) { return from_json(j, SamplerConfig()); }
};

struct ChainOutput {
    Eigen::MatrixXd draws;          // retained draws x dimension
    Eigen::VectorXd log_density;    // per retained draw
    Eigen::VectorXd accept_stat;    // per retained draw
    std::vector<int> tree_depth;    // per retained draw
    std::vector<int> leapfrog_steps;
    int divergences = 0;            // over all post-warmup iterations
    int post_warmup_iterations = 0;
    double step_size = 0.0;
    Eigen::VectorXd inv_metric;     // diagonal inverse mass matrix
    /// Set when more than 10% of post-warmup transitions diverged.
    bool divergence_warning = false;
};

/// Phase-space point with cached log density and gradient at q.
struct PhasePoint {
    Eigen::VectorXd q;
    Eigen::VectorXd p;
    Eigen::VectorXd grad;
    double log_density = 0.0;
};

/// Evaluates the target at z.q, filling log_density and grad.
void refresh(const LogDensityGradient& target, PhasePoint& z);

/// Kinetic plus potential energy under a diagonal inverse metric.
[[nodiscard]] double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric);

/// One velocity-Verlet step of size `step` (negative steps integrate backwards).
void leapfrog(const LogDensityGradient& target, const Eigen::VectorXd& inv_metric, double step,
              PhasePoint& z);

/// Runs one chain of multinomial NUTS with windowed adaptation.
/// `chain_index` selects the chain's random stream under config.seed.
[[nodiscard]] ChainOutput run_chain(const LogDensityGradient& target, const Eigen::VectorXd& init,
                                    const SamplerConfig& config, int chain_index);

/// Runs config.chains chains (one init each) in parallel. Throws InitError if a
/// start point has non-finite log density or gradient.
[[nodiscard]] std::vector<ChainOutput> nuts_sample(const LogDensityGradient& target,
                                                   const std::vector<Eigen::VectorXd>& inits,
                                                   const SamplerConfig& config);

}  // namespace blv
