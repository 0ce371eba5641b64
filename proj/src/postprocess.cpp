#include "blv/postprocess.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blv/error.hpp"

namespace blv {

namespace {

/// Makes the largest-magnitude entry of every column positive.
void fix_signs(Eigen::MatrixXd& m, Eigen::MatrixXd* rotation = nullptr) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
        Eigen::Index arg = 0;
        m.col(k).cwiseAbs().maxCoeff(&arg);
        if (m(arg, k) < 0.0) {
            m.col(k) *= -1.0;
            if (rotation) rotation->col(k) *= -1.0;
        }
    }
}

}  // namespace

Eigen::MatrixXd pca_loadings(const Eigen::MatrixXd& correlation, int K) {
    const auto J = correlation.rows();
    if (K < 1 || K > J) throw StructuralError(fmt::format("cannot take {} components of {}", K, J));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(correlation);
    // Eigen returns ascending eigenvalues.
    Eigen::MatrixXd out(J, K);
    const double tol = 1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    for (int k = 0; k < K; ++k) {
        const double lambda = eig.eigenvalues()(J - 1 - k);
        if (!(lambda > tol)) {
            throw RankError(fmt::format("correlation matrix has fewer than {} positive eigenvalues",
                                        K));
        }
        out.col(k) = eig.eigenvectors().col(J - 1 - k) * std::sqrt(lambda);
    }
    fix_signs(out);
    return out;
}

Eigen::MatrixXd pca_reference(const MortalityPanel& panel, int K) {
    return pca_loadings(correlation_matrix(panel, Scale::logit), K);
}

Eigen::MatrixXd procrustes_align(const Eigen::MatrixXd& loadings, const Eigen::MatrixXd& reference) {
    if (loadings.rows() != reference.rows() || loadings.cols() != reference.cols()) {
        throw StructuralError("procrustes_align: loadings and reference differ in shape");
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(loadings.transpose() * reference,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

Eigen::MatrixXd draw_loadings(const ParamLayout& layout, std::span<const double> x) {
    Eigen::MatrixXd a(layout.ages(), layout.K());
    for (int j = 0; j < layout.ages(); ++j) {
        for (int k = 0; k < layout.K(); ++k) a(j, k) = x[layout.alpha(j, k)];
    }
    return a;
}

void rotate_draw(const ParamLayout& layout, const Eigen::MatrixXd& L, std::span<double> x) {
    const int K = layout.K();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> alpha(
        x.data() + layout.alpha(0, 0), layout.ages(), K);
    alpha = (alpha * L).eval();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> latent(
        x.data() + layout.latent_offset(), layout.rows(), K);
    latent = (latent * L).eval();
}

std::vector<Eigen::MatrixXd> align_all(const ParamLayout& layout, const Eigen::MatrixXd& reference,
                                       std::vector<Eigen::MatrixXd>& chains) {
    std::vector<Eigen::MatrixXd> rotations;
    Eigen::VectorXd row(layout.size());
    for (auto& chain : chains) {
        for (Eigen::Index s = 0; s < chain.rows(); ++s) {
            row = chain.row(s).transpose();
            std::span<double> x(row.data(), static_cast<std::size_t>(row.size()));
            Eigen::MatrixXd L = procrustes_align(draw_loadings(layout, x), reference);
            rotate_draw(layout, L, x);
            chain.row(s) = row.transpose();
            rotations.push_back(std::move(L));
        }
    }
    return rotations;
}

void rotate_all(const ParamLayout& layout, const Eigen::MatrixXd& L,
                std::vector<Eigen::MatrixXd>& chains) {
    Eigen::VectorXd row(layout.size());
    for (auto& chain : chains) {
        for (Eigen::Index s = 0; s < chain.rows(); ++s) {
            row = chain.row(s).transpose();
            rotate_draw(layout, L, {row.data(), static_cast<std::size_t>(row.size())});
            chain.row(s) = row.transpose();
        }
    }
}

double varimax_criterion(const Eigen::MatrixXd& loadings) {
    const auto J = static_cast<double>(loadings.rows());
    const Eigen::ArrayXXd sq = loadings.array().square();
    double v = 0.0;
    for (Eigen::Index k = 0; k < loadings.cols(); ++k) {
        const double m2 = sq.col(k).sum() / J;
        v += sq.col(k).square().sum() / J - m2 * m2;
    }
    return v;
}

VarimaxResult varimax(const Eigen::MatrixXd& loadings, double tolerance, int max_sweeps) {
    const auto K = loadings.cols();
    const auto J = static_cast<double>(loadings.rows());
    VarimaxResult out;
    out.loadings = loadings;
    out.rotation = Eigen::MatrixXd::Identity(K, K);
    Eigen::MatrixXd& a = out.loadings;
    Eigen::MatrixXd& r = out.rotation;

    if (K > 1) {
        for (int sweep = 0; sweep < max_sweeps; ++sweep) {
            double largest = 0.0;
            for (Eigen::Index j = 0; j + 1 < K; ++j) {
                for (Eigen::Index k = j + 1; k < K; ++k) {
                    const Eigen::ArrayXd x = a.col(j).array();
                    const Eigen::ArrayXd y = a.col(k).array();
                    const Eigen::ArrayXd u = x.square() - y.square();
                    const Eigen::ArrayXd v = 2.0 * x * y;
                    const double A = u.sum();
                    const double B = v.sum();
                    const double C = (u.square() - v.square()).sum();
                    const double D = 2.0 * (u * v).sum();
                    const double angle = 0.25 * std::atan2(D - 2.0 * A * B / J,
                                                           C - (A * A - B * B) / J);
                    largest = std::max(largest, std::abs(angle));
                    const double c = std::cos(angle);
                    const double s = std::sin(angle);
                    const Eigen::VectorXd aj = a.col(j), ak = a.col(k);
                    a.col(j) = c * aj + s * ak;
                    a.col(k) = -s * aj + c * ak;
                    const Eigen::VectorXd rj = r.col(j), rk = r.col(k);
                    r.col(j) = c * rj + s * rk;
                    r.col(k) = -s * rj + c * rk;
                }
            }
            ++out.sweeps;
            out.criterion_trace.push_back(varimax_criterion(a));
            if (largest < tolerance) break;
        }
    }

    std::vector<Eigen::Index> order(K);
    std::iota(order.begin(), order.end(), 0);
    const Eigen::VectorXd ss = a.colwise().squaredNorm();
    std::stable_sort(order.begin(), order.end(),
                     [&ss](Eigen::Index p, Eigen::Index q) { return ss(p) > ss(q); });
    Eigen::MatrixXd sorted_a(a.rows(), K), sorted_r(K, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        sorted_a.col(k) = a.col(order[k]);
        sorted_r.col(k) = r.col(order[k]);
    }
    a = sorted_a;
    r = sorted_r;
    fix_signs(a, &r);
    return out;
}

Summary summarize(std::span<const double> draws, double level) {
    if (draws.empty()) throw InsufficientDataError("summarize: no draws");
    std::vector<double> v(draws.begin(), draws.end());
    const auto S = v.size();
    Summary out;
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(S);
    std::sort(v.begin(), v.end());
    const auto inside = std::min<std::size_t>(
        S, static_cast<std::size_t>(std::ceil(level * static_cast<double>(S) - 1e-9)));
    const std::size_t span = inside > 0 ? inside - 1 : 0;
    std::size_t best = 0;
    double width = v[span] - v[0];
    for (std::size_t i = 1; i + span < S; ++i) {
        const double w = v[i + span] - v[i];
        if (w < width) {
            width = w;
            best = i;
        }
    }
    out.hpd_low = v[best];
    out.hpd_high = v[best + span];
    return out;
}

}  // namespace blv
