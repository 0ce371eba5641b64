#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "blv/data.hpp"
#include "blv/model.hpp"
#include "blv/pipeline.hpp"
#include "blv/postprocess.hpp"

namespace blv {

/// Parameters fixed at posterior means of their natural scale (alpha, beta,
/// kappa, phi, sigma) plus the per-(i,t) posterior mean and K x K covariance
/// of the increments eps.
struct PosteriorPoint {
    BlvParameters params;
    Eigen::MatrixXd eps_mean;              // rows x K
    std::vector<Eigen::MatrixXd> eps_cov;  // one K x K block per row
};

[[nodiscard]] PosteriorPoint posterior_point(const ModelSpec& spec,
                                             const std::vector<Eigen::MatrixXd>& chains);

/// Gaussian proposal for one (i,t) block of eps.
struct BlockProposal {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct CountryEstimate {
    double log_marginal = 0.0;
    double std_error = 0.0;     // delta-method MC standard error of log_marginal
    double weight_ess = 0.0;    // (sum w)^2 / sum w^2
    bool degenerate = false;    // weight_ess < 0.01 M
    int jittered_blocks = 0;    // proposals needing the 1e-8 I regularisation
};

/// log of the importance-sampling average of p(q_i | eps) N(eps; 0, I) / g(eps)
/// over M joint draws from the blockwise proposal g of country i.
[[nodiscard]] CountryEstimate country_marginal_loglik(const BlvParameters& params,
                                                      const MortalityPanel& panel, int country,
                                                      const std::vector<BlockProposal>& blocks,
                                                      int M, Rng& rng);

struct MarginalLikelihoodEstimate {
    std::vector<CountryEstimate> countries;
    double total = 0.0;
    double total_std_error = 0.0;
    int M = 0;
    int jittered_blocks = 0;
    int degenerate_countries = 0;
};

/// Marginal log likelihood at the posterior point, countries evaluated in
/// parallel; country i draws from stream (seed, importance, i).
[[nodiscard]] MarginalLikelihoodEstimate is_marginal_loglik(const MortalityPanel& panel,
                                                            const PosteriorPoint& point, int M,
                                                            std::uint64_t seed, int threads = 0);

/// Exact Gaussian marginal of the factor model at posterior-mean loadings and
/// uniquenesses: rows of the centred logit data ~ N(0, alpha alpha' + Psi).
[[nodiscard]] double bfa_marginal_loglik(const ModelSpec& spec, const Eigen::MatrixXd& centred_logit,
                                         const std::vector<Eigen::MatrixXd>& chains);

/// J K + J + 1 + 2 n for BLV; J K + J for BFA.
[[nodiscard]] int parameter_count(const ModelSpec& spec);
/// Number of scalar observations, sum_i N_i J.
[[nodiscard]] int observation_count(const MortalityPanel& panel);

/// -2 log marginal + v log N.
[[nodiscard]] double bic_m(double log_marginal, double v, double N);

struct WaicResult {
    double waic = 0.0;
    double lppd = 0.0;
    double p_waic = 0.0;
    int observations = 0;
    /// Observations whose log-likelihood variance exceeds 0.4.
    int flagged = 0;
};

/// Streaming WAIC over draws; each call adds one draw's pointwise log likelihood.
class WaicAccumulator {
public:
    void add(const Eigen::Ref<const Eigen::MatrixXd>& pointwise);
    [[nodiscard]] WaicResult result() const;

private:
    long draws_ = 0;
    Eigen::ArrayXXd max_, sum_exp_, mean_, m2_;
};

/// WAIC from a (draws x observations) matrix of pointwise log likelihoods.
[[nodiscard]] WaicResult waic(const Eigen::MatrixXd& loglik);

/// WAIC from the conditional likelihood of every draw of a fit.
[[nodiscard]] WaicResult waic_c(const ModelSpec& spec, const MortalityPanel& panel,
                                const std::vector<Eigen::MatrixXd>& chains);

/// Posterior predictive mean of q (rows x J). For BLV the mean of mu over draws;
/// for BFA the predictive mean on the probability scale of the logit-Gaussian.
[[nodiscard]] Eigen::MatrixXd posterior_predict_mean(const ModelSpec& spec,
                                                     const MortalityPanel& panel,
                                                     const std::vector<Eigen::MatrixXd>& chains);

/// Posterior mean of the latent states (rows x K).
[[nodiscard]] Eigen::MatrixXd latent_mean(const ModelSpec& spec,
                                          const std::vector<Eigen::MatrixXd>& chains);

struct FitMetrics {
    double rmse = 0.0;
    double mape = 0.0;
};

[[nodiscard]] FitMetrics fit_metrics(const Eigen::MatrixXd& q_hat, const MortalityPanel& panel);

/// Euclidean distances between all unordered row pairs (i < j), row-major.
[[nodiscard]] Eigen::VectorXd pairwise_distances(const Eigen::MatrixXd& rows);

/// Spearman correlation with average ranks for ties.
[[nodiscard]] double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct DistanceMetrics {
    double rmse = 0.0;
    double mape = 0.0;  // over pairs with nonzero observed distance
    double cophenetic = 0.0;
};

[[nodiscard]] DistanceMetrics distance_metrics(const Eigen::MatrixXd& q_observed,
                                               const Eigen::MatrixXd& q_hat,
                                               const Eigen::MatrixXd& latent);

[[nodiscard]] Summary log_kappa_summary(const ModelSpec& spec,
                                        const std::vector<Eigen::MatrixXd>& chains,
                                        double level = 0.95);

struct SelectionOptions {
    int is_samples = 100000;
    std::uint64_t seed = 1;
    int threads = 0;
};

struct SelectionRow {
    int K = 0;
    Variant variant = Variant::blv;
    bool complete = false;
    std::string error;
    double log_marginal = 0.0;
    double log_marginal_se = 0.0;
    double bic_m = 0.0;
    double waic_c = 0.0;
    double p_waic = 0.0;
    int waic_flagged = 0;
    double log_kappa_mean = 0.0;
    double log_kappa_low = 0.0;
    double log_kappa_high = 0.0;
    double rmse_q = 0.0;
    double mape_q = 0.0;
    double rmse_d = 0.0;
    double mape_d = 0.0;
    double cophenetic = 0.0;
    double max_r_hat = 0.0;
    int divergences = 0;
    bool min_bic = false;
};

/// All model-choice and fit metrics of one fitted model.
[[nodiscard]] SelectionRow evaluate_fit(const MortalityPanel& panel, const FitResult& fit,
                                        const SelectionOptions& options);

struct SelectionReport {
    std::vector<SelectionRow> rows;

    /// Flags the complete row with the lowest bic_m.
    void flag_minimum();
    [[nodiscard]] std::optional<int> selected_by_bic() const;
    [[nodiscard]] std::optional<int> selected_by_waic() const;
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

}  // namespace blv
