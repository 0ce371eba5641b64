#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace blv {

// All functions take one parameter's draws as a (draws x chains) matrix and
// return std::nullopt when the statistic is unavailable (constant or
// non-finite draws, fewer than 2 chains or 4 draws per chain).

/// Classic split R-hat: sqrt(((n-1)/n W + B/n) / W) over split chains.
[[nodiscard]] std::optional<double> split_r_hat(const Eigen::Ref<const Eigen::MatrixXd>& draws);

/// Rank-normalized split R-hat; the maximum of the bulk and folded-tail values.
[[nodiscard]] std::optional<double> r_hat(const Eigen::Ref<const Eigen::MatrixXd>& draws);

/// Split-chain effective sample size with Geyer's initial monotone sequence.
[[nodiscard]] std::optional<double> effective_sample_size(
    const Eigen::Ref<const Eigen::MatrixXd>& draws);

struct Diagnostics {
    std::vector<std::optional<double>> r_hat;
    std::vector<std::optional<double>> ess;
};

/// Diagnostics for every column of per-chain (draws x dimension) matrices.
[[nodiscard]] Diagnostics diagnose(const std::vector<Eigen::MatrixXd>& chains);

/// Convergence summary of a named parameter group.
struct GroupDiagnostics {
    std::string group;
    int parameters = 0;
    int unavailable = 0;
    double share_r_hat_above = 0.0;  // share of available r_hat > threshold
    double r_hat_p99 = 0.0;
    double min_ess = 0.0;
};

[[nodiscard]] GroupDiagnostics summarize_group(const std::string& group,
                                               const std::vector<std::optional<double>>& r_hat,
                                               const std::vector<std::optional<double>>& ess,
                                               double threshold = 1.1);

}  // namespace blv
