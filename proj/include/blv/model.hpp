#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "blv/data.hpp"
#include "blv/error.hpp"
#include "blv/rng.hpp"

namespace blv {

enum class Variant { blv, bfa };

[[nodiscard]] std::string to_string(Variant v);
[[nodiscard]] Variant parse_variant(const std::string& s);

/// Prior variances. Normal priors are written N(mean, variance).
struct PriorScales {
    double alpha_variance = 1.0;
    double beta_variance = 100.0;
    double log_kappa_variance = 100.0;
    double log_sigma_variance = 1.0;
    /// BFA uniquenesses: log psi_x ~ N(0, log_psi_variance).
    double log_psi_variance = 1.0;
};

/// Dimensions of a panel, detached from its values.
struct PanelShape {
    int countries = 0;
    int ages = 0;
    std::vector<int> first_time;
    std::vector<int> lengths;
    std::vector<int> row_offsets;
    int rows = 0;

    static PanelShape of(const MortalityPanel& panel);
    [[nodiscard]] int row(int country, int time) const {
        return row_offsets[country] + (time - first_time[country]);
    }
    bool operator==(const PanelShape&) const = default;
};

struct ModelSpec {
    Variant variant = Variant::blv;
    int K = 1;
    PanelShape shape;
    PriorScales priors;

    /// Throws StructuralError unless 1 <= K <= J.
    static ModelSpec for_panel(const MortalityPanel& panel, int K, Variant variant = Variant::blv,
                               PriorScales priors = {});
    /// Throws StructuralError if the panel's dimensions differ from `shape`.
    void check_against(const MortalityPanel& panel) const;
};

/// Offsets of the named blocks inside the flat unconstrained vector.
///
/// BLV: alpha[J*K] beta[J] log_kappa u_phi[n] log_sigma[n] eps[rows*K]
/// BFA: alpha[J*K] log_psi[J] theta[rows*K]
///
/// alpha is row-major by age group; the latent block is row-major by stacked
/// panel row. In BLV it holds the increments eps, in BFA the factors theta.
class ParamLayout {
public:
    explicit ParamLayout(const ModelSpec& spec);

    [[nodiscard]] int size() const noexcept { return size_; }
    [[nodiscard]] int K() const noexcept { return K_; }
    [[nodiscard]] int ages() const noexcept { return J_; }
    [[nodiscard]] int countries() const noexcept { return n_; }
    [[nodiscard]] int rows() const noexcept { return rows_; }
    [[nodiscard]] Variant variant() const noexcept { return variant_; }

    [[nodiscard]] int alpha(int x, int k) const noexcept { return alpha_ + x * K_ + k; }
    [[nodiscard]] int beta(int x) const noexcept { return beta_ + x; }
    [[nodiscard]] int log_kappa() const noexcept { return log_kappa_; }
    [[nodiscard]] int u_phi(int i) const noexcept { return u_phi_ + i; }
    [[nodiscard]] int log_sigma(int i) const noexcept { return log_sigma_ + i; }
    [[nodiscard]] int log_psi(int x) const noexcept { return log_psi_ + x; }
    [[nodiscard]] int latent(int row, int k) const noexcept { return latent_ + row * K_ + k; }
    [[nodiscard]] int latent_offset() const noexcept { return latent_; }

    /// Scalar names such as `alpha[x=5,k=1]`, `eps[c=FRA,t=3,k=2]`.
    [[nodiscard]] std::vector<std::string> names(const MortalityPanel& panel) const;
    /// Dimensions and block offsets.
    [[nodiscard]] nlohmann::json to_json() const;

private:
    Variant variant_;
    int K_, J_, n_, rows_;
    int alpha_ = 0, beta_ = -1, log_kappa_ = -1, u_phi_ = -1, log_sigma_ = -1, log_psi_ = -1;
    int latent_ = 0;
    int size_ = 0;
};

/// Flat unconstrained parameter state with its layout.
struct ParamVector {
    ParamLayout layout;
    Eigen::VectorXd values;

    explicit ParamVector(const ModelSpec& spec)
        : layout(spec), values(Eigen::VectorXd::Zero(layout.size())) {}
};

/// BLV parameters on their natural scale.
struct BlvParameters {
    Eigen::MatrixXd alpha;  // J x K
    Eigen::VectorXd beta;   // J
    double kappa = 1.0;
    Eigen::VectorXd phi;    // n
    Eigen::VectorXd sigma;  // n

    [[nodiscard]] static BlvParameters unpack(const ParamLayout& layout,
                                              std::span<const double> x);
    /// Writes every non-latent block of `x`.
    void pack(const ParamLayout& layout, std::span<double> x) const;
};

/// AR(1) states for one country from its increments (N x K), by the recursion
/// theta_1 = sigma/sqrt(1-phi^2) eps_1, theta_t = phi theta_{t-1} + sigma eps_t.
[[nodiscard]] Eigen::MatrixXd country_states(double phi, double sigma,
                                             const Eigen::Ref<const Eigen::MatrixXd>& eps);
/// Inverse of country_states.
[[nodiscard]] Eigen::MatrixXd country_increments(double phi, double sigma,
                                                 const Eigen::Ref<const Eigen::MatrixXd>& theta);

/// All latent states (rows x K, stacked like the panel) of a BLV parameter vector.
[[nodiscard]] Eigen::MatrixXd latent_states(const ModelSpec& spec, std::span<const double> x);

/// The latent block of `x` as a (rows x K) matrix.
[[nodiscard]] Eigen::MatrixXd latent_block(const ParamLayout& layout, std::span<const double> x);
void set_latent_block(const ParamLayout& layout, const Eigen::Ref<const Eigen::MatrixXd>& block,
                      std::span<double> x);

/// mu for country i, period t (absolute index) and age index x.
[[nodiscard]] double expected_mortality(const ModelSpec& spec, const ParamVector& params, int i,
                                        int t, int x);

/// Sum of beta-proportion log densities of one country's rows given its states.
[[nodiscard]] double country_log_likelihood(const BlvParameters& params,
                                            const MortalityPanel& panel, int i,
                                            const Eigen::Ref<const Eigen::MatrixXd>& theta);

/// Log posterior of the time-dependent BLV model on the unconstrained space,
/// including all normalising constants of the likelihood and priors.
class BlvPosterior {
public:
    BlvPosterior(ModelSpec spec, const MortalityPanel& panel);

    [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const ParamLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] int dimension() const noexcept { return layout_.size(); }

    [[nodiscard]] double log_density(std::span<const double> x) const;
    /// Returns the log density and writes its gradient into `grad`.
    double log_density_gradient(std::span<const double> x, std::span<double> grad) const;

    /// Conditional log likelihood only (no priors).
    [[nodiscard]] double log_likelihood(std::span<const double> x) const;
    /// Pointwise conditional log likelihood, (rows x J), for WAIC.
    [[nodiscard]] Eigen::MatrixXd pointwise_log_likelihood(std::span<const double> x) const;

private:
    double evaluate(std::span<const double> x, double* grad, bool with_prior) const;

    ModelSpec spec_;
    ParamLayout layout_;
    Eigen::MatrixXd log_q_;    // rows x J
    Eigen::MatrixXd log_1mq_;  // rows x J
};

[[nodiscard]] double log_posterior(const ModelSpec& spec, const ParamVector& params,
                                   const MortalityPanel& panel);
[[nodiscard]] Eigen::VectorXd log_posterior_grad(const ModelSpec& spec, const ParamVector& params,
                                                 const MortalityPanel& panel);

/// Gaussian factor model for the centred logit data:
/// y_rx ~ N(alpha_x' theta_r, psi_x), theta_r ~ N(0, I), alpha ~ N(0,1), log psi ~ N(0,1).
class BfaPosterior {
public:
    BfaPosterior(ModelSpec spec, Eigen::MatrixXd centred_logit);

    [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const ParamLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] int dimension() const noexcept { return layout_.size(); }
    [[nodiscard]] const Eigen::MatrixXd& data() const noexcept { return y_; }

    [[nodiscard]] double log_density(std::span<const double> x) const;
    double log_density_gradient(std::span<const double> x, std::span<double> grad) const;

private:
    double evaluate(std::span<const double> x, double* grad) const;

    ModelSpec spec_;
    ParamLayout layout_;
    Eigen::MatrixXd y_;
};

[[nodiscard]] double bfa_log_posterior(const ModelSpec& spec, const ParamVector& params,
                                       const Eigen::MatrixXd& centred_logit);
[[nodiscard]] Eigen::VectorXd bfa_log_posterior_grad(const ModelSpec& spec,
                                                     const ParamVector& params,
                                                     const Eigen::MatrixXd& centred_logit);

struct MleResult {
    Eigen::VectorXd beta;
    double log_kappa = 0.0;
    /// Set when the likelihood kept increasing in kappa and log kappa was capped.
    bool kappa_capped = false;
    int iterations = 0;
    double gradient_norm = 0.0;
};

struct MleOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-8;
    double max_log_kappa = 30.0;
};

/// Thrown when the intercept-only fit does not converge; carries the last iterate.
class MleNonConvergence : public ConvergenceError {
public:
    MleNonConvergence(const std::string& what, MleResult last)
        : ConvergenceError(what), last_(std::move(last)) {}
    [[nodiscard]] const MleResult& last_iterate() const noexcept { return last_; }

private:
    MleResult last_;
};

/// Maximum-likelihood (beta, log kappa) of the BLV model with all loadings at 0.
[[nodiscard]] MleResult mle_intercept_only(const MortalityPanel& panel, MleOptions options = {});

/// Moment-matched (beta, log kappa): logit of column means, pooled precision.
[[nodiscard]] MleResult moment_intercept_only(const MortalityPanel& panel);

struct Initialization {
    ParamVector params;
    /// True when the MLE failed and moment-matched starts were used.
    bool used_moment_fallback = false;
};

/// Random starting point for a chain.
[[nodiscard]] Initialization initialize(const ModelSpec& spec, const MortalityPanel& panel,
                                        Rng& rng);
/// As above, reusing a precomputed intercept-only fit.
[[nodiscard]] Initialization initialize(const ModelSpec& spec, const MortalityPanel& panel,
                                        const MleResult& intercepts, bool fallback, Rng& rng);

}  // namespace blv
