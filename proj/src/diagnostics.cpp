#include "blv/diagnostics.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <numeric>

namespace blv {

namespace {

bool usable(const Eigen::Ref<const Eigen::MatrixXd>& draws) {
    if (draws.cols() < 1 || draws.rows() < 4 || !draws.allFinite()) return false;
    return (draws.array() != draws(0, 0)).any();
}

/// Splits each chain in half, dropping the middle draw of odd-length chains.
Eigen::MatrixXd split_chains(const Eigen::Ref<const Eigen::MatrixXd>& draws) {
    const Eigen::Index n = draws.rows();
    const Eigen::Index half = n / 2;
    Eigen::MatrixXd out(half, 2 * draws.cols());
    for (Eigen::Index c = 0; c < draws.cols(); ++c) {
        out.col(2 * c) = draws.col(c).head(half);
        out.col(2 * c + 1) = draws.col(c).tail(half);
    }
    return out;
}

double sample_variance(const Eigen::VectorXd& v) {
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

/// R-hat of already split chains.
double r_hat_of_split(const Eigen::MatrixXd& chains) {
    const auto n = static_cast<double>(chains.rows());
    const Eigen::Index m = chains.cols();
    Eigen::VectorXd means(m), vars(m);
    for (Eigen::Index c = 0; c < m; ++c) {
        means(c) = chains.col(c).mean();
        vars(c) = sample_variance(chains.col(c));
    }
    const double between = n * sample_variance(means);
    const double within = vars.mean();
    return std::sqrt((between / within + n - 1.0) / n);
}

/// Normal scores of the pooled ranks (average ranks for ties).
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& x) {
    const Eigen::Index total = x.size();
    std::vector<Eigen::Index> order(total);
    std::iota(order.begin(), order.end(), 0);
    const double* data = x.data();
    std::stable_sort(order.begin(), order.end(),
                     [data](Eigen::Index a, Eigen::Index b) { return data[a] < data[b]; });
    Eigen::MatrixXd z(x.rows(), x.cols());
    double* out = z.data();
    const double denom = static_cast<double>(total) + 0.25;
    Eigen::Index i = 0;
    while (i < total) {
        Eigen::Index j = i;
        while (j + 1 < total && data[order[j + 1]] == data[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        const double p = (rank - 0.375) / denom;
        const double score = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
        for (Eigen::Index k = i; k <= j; ++k) out[order[k]] = score;
        i = j + 1;
    }
    return z;
}

double median(Eigen::VectorXd v) {
    const auto n = v.size();
    std::sort(v.data(), v.data() + n);
    return n % 2 == 1 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

/// Biased autocovariance of one chain at `lag`.
double autocovariance(const Eigen::VectorXd& centred, Eigen::Index lag) {
    const Eigen::Index n = centred.size();
    return centred.head(n - lag).dot(centred.tail(n - lag)) / static_cast<double>(n);
}

double ess_of_split(const Eigen::MatrixXd& chains) {
    const Eigen::Index n = chains.rows();
    const Eigen::Index m = chains.cols();
    const auto nd = static_cast<double>(n);

    std::vector<Eigen::VectorXd> centred(m);
    Eigen::VectorXd means(m), vars(m);
    for (Eigen::Index c = 0; c < m; ++c) {
        means(c) = chains.col(c).mean();
        centred[c] = chains.col(c).array() - means(c);
        vars(c) = autocovariance(centred[c], 0) * nd / (nd - 1.0);
    }
    const double mean_var = vars.mean();
    double var_plus = mean_var * (nd - 1.0) / nd;
    if (m > 1) var_plus += sample_variance(means);

    auto rho = [&](Eigen::Index lag) {
        double acov = 0.0;
        for (Eigen::Index c = 0; c < m; ++c) acov += autocovariance(centred[c], lag);
        return 1.0 - (mean_var - acov / static_cast<double>(m)) / var_plus;
    };

    Eigen::VectorXd rho_hat = Eigen::VectorXd::Zero(n + 2);
    double rho_even = 1.0;
    double rho_odd = rho(1);
    rho_hat(0) = rho_even;
    rho_hat(1) = rho_odd;

    Eigen::Index s = 1;
    while (s < n - 4 && rho_even + rho_odd > 0.0) {
        rho_even = rho(s + 1);
        rho_odd = rho(s + 2);
        if (rho_even + rho_odd >= 0.0) {
            rho_hat(s + 1) = rho_even;
            rho_hat(s + 2) = rho_odd;
        }
        s += 2;
    }
    const Eigen::Index max_s = s;
    if (rho_even > 0.0) rho_hat(max_s + 1) = rho_even;

    for (Eigen::Index t = 1; t <= max_s - 3; t += 2) {
        if (rho_hat(t + 1) + rho_hat(t + 2) > rho_hat(t - 1) + rho_hat(t)) {
            rho_hat(t + 1) = 0.5 * (rho_hat(t - 1) + rho_hat(t));
            rho_hat(t + 2) = rho_hat(t + 1);
        }
    }

    const double total = static_cast<double>(m) * nd;
    const double tau = -1.0 + 2.0 * rho_hat.head(max_s).sum() + rho_hat(max_s + 1);
    return std::min(total / tau, total * std::log10(total));
}

}  // namespace

std::optional<double> split_r_hat(const Eigen::Ref<const Eigen::MatrixXd>& draws) {
    if (draws.cols() < 2 || !usable(draws)) return std::nullopt;
    return r_hat_of_split(split_chains(draws));
}

std::optional<double> r_hat(const Eigen::Ref<const Eigen::MatrixXd>& draws) {
    if (draws.cols() < 2 || !usable(draws)) return std::nullopt;
    const Eigen::MatrixXd split = split_chains(draws);
    const double bulk = r_hat_of_split(rank_normalize(split));
    const double med = median(Eigen::Map<const Eigen::VectorXd>(split.data(), split.size()));
    const Eigen::MatrixXd folded = (split.array() - med).abs();
    const double tail = r_hat_of_split(rank_normalize(folded));
    if (!std::isfinite(bulk) || !std::isfinite(tail)) return std::nullopt;
    return std::max(bulk, tail);
}

std::optional<double> effective_sample_size(const Eigen::Ref<const Eigen::MatrixXd>& draws) {
    if (!usable(draws)) return std::nullopt;
    const double ess = ess_of_split(split_chains(draws));
    if (!std::isfinite(ess)) return std::nullopt;
    return ess;
}

Diagnostics diagnose(const std::vector<Eigen::MatrixXd>& chains) {
    Diagnostics out;
    if (chains.empty()) return out;
    const Eigen::Index draws = chains.front().rows();
    const Eigen::Index dim = chains.front().cols();
    out.r_hat.resize(dim);
    out.ess.resize(dim);
    Eigen::MatrixXd column(draws, static_cast<Eigen::Index>(chains.size()));
    for (Eigen::Index d = 0; d < dim; ++d) {
        for (std::size_t c = 0; c < chains.size(); ++c) column.col(c) = chains[c].col(d);
        out.r_hat[d] = r_hat(column);
        out.ess[d] = effective_sample_size(column);
    }
    return out;
}

GroupDiagnostics summarize_group(const std::string& group,
                                 const std::vector<std::optional<double>>& r_hat,
                                 const std::vector<std::optional<double>>& ess, double threshold) {
    GroupDiagnostics g;
    g.group = group;
    g.parameters = static_cast<int>(r_hat.size());
    std::vector<double> available;
    for (const auto& r : r_hat) {
        if (r) {
            available.push_back(*r);
        } else {
            ++g.unavailable;
        }
    }
    if (!available.empty()) {
        const auto above = std::count_if(available.begin(), available.end(),
                                         [threshold](double r) { return r > threshold; });
        g.share_r_hat_above = static_cast<double>(above) / static_cast<double>(available.size());
        std::sort(available.begin(), available.end());
        const double pos = 0.99 * static_cast<double>(available.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, available.size() - 1);
        g.r_hat_p99 = available[lo] + (pos - static_cast<double>(lo)) * (available[hi] - available[lo]);
    }
    double min_ess = std::numeric_limits<double>::infinity();
    for (const auto& e : ess) {
        if (e) min_ess = std::min(min_ess, *e);
    }
    g.min_ess = std::isfinite(min_ess) ? min_ess : 0.0;
    return g;
}

}  // namespace blv
