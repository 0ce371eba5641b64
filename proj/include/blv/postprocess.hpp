#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "blv/data.hpp"
#include "blv/model.hpp"

namespace blv {

/// First K eigenvectors of the logit correlation matrix, scaled by the square
/// root of their eigenvalues. Columns follow decreasing eigenvalue; each
/// column's largest-magnitude entry is positive. Throws RankError when fewer
/// than K eigenvalues are positive.
[[nodiscard]] Eigen::MatrixXd pca_reference(const MortalityPanel& panel, int K);

/// As above, from a given J x J correlation matrix.
[[nodiscard]] Eigen::MatrixXd pca_loadings(const Eigen::MatrixXd& correlation, int K);

/// Orthogonal L minimising |loadings * L - reference|_F, from the SVD of
/// loadings' * reference (L = U V'). Reflections are allowed. When the cross
/// product is rank deficient the solution is not unique and the SVD's own
/// choice of singular vectors decides.
[[nodiscard]] Eigen::MatrixXd procrustes_align(const Eigen::MatrixXd& loadings,
                                               const Eigen::MatrixXd& reference);

/// Applies an orthogonal L to one draw: alpha <- alpha L, latent rows <- rows L.
/// For BLV the latent block holds eps, which carries theta along linearly.
void rotate_draw(const ParamLayout& layout, const Eigen::MatrixXd& L, std::span<double> x);

/// Loadings of one draw as a J x K matrix.
[[nodiscard]] Eigen::MatrixXd draw_loadings(const ParamLayout& layout, std::span<const double> x);

/// Aligns every draw (rows of each chain matrix) to `reference` in place and
/// returns the rotation used for each draw, chain-major.
std::vector<Eigen::MatrixXd> align_all(const ParamLayout& layout, const Eigen::MatrixXd& reference,
                                       std::vector<Eigen::MatrixXd>& chains);

/// Rotates every draw by the same orthogonal L.
void rotate_all(const ParamLayout& layout, const Eigen::MatrixXd& L,
                std::vector<Eigen::MatrixXd>& chains);

[[nodiscard]] double varimax_criterion(const Eigen::MatrixXd& loadings);

struct VarimaxResult {
    Eigen::MatrixXd loadings;  // input * rotation
    Eigen::MatrixXd rotation;  // K x K orthogonal
    std::vector<double> criterion_trace;  // after each sweep
    int sweeps = 0;
};

/// Raw varimax by pairwise plane rotations, iterated until every angle is
/// below `tolerance`. Columns are then ordered by decreasing sum of squares and
/// signed so that each column's largest-magnitude loading is positive.
[[nodiscard]] VarimaxResult varimax(const Eigen::MatrixXd& loadings, double tolerance = 1e-10,
                                    int max_sweeps = 1000);

struct Summary {
    double mean = 0.0;
    double hpd_low = 0.0;
    double hpd_high = 0.0;
};

/// Sample mean and the shortest interval containing ceil(level * S) sorted draws.
[[nodiscard]] Summary summarize(std::span<const double> draws, double level = 0.95);

}  // namespace blv
