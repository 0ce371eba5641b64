#include "blv/selection.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blv/distributions.hpp"
#include "blv/error.hpp"
#include "blv/parallel.hpp"

namespace blv {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::Index total_draws(const std::vector<Eigen::MatrixXd>& chains) {
    Eigen::Index s = 0;
    for (const auto& c : chains) s += c.rows();
    return s;
}

template <typename F>
void for_each_draw(const std::vector<Eigen::MatrixXd>& chains, F&& f) {
    Eigen::VectorXd x;
    for (const auto& chain : chains) {
        for (Eigen::Index s = 0; s < chain.rows(); ++s) {
            x = chain.row(s).transpose();
            f(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
        }
    }
}

Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&v](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
    Eigen::VectorXd ranks(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Eigen::Index k = i; k <= j; ++k) ranks(order[k]) = r;
        i = j + 1;
    }
    return ranks;
}

/// Gauss-Hermite nodes and weights for the standard normal (Golub-Welsch).
void gauss_hermite_normal(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(i);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    nodes = eig.eigenvalues();
    weights = eig.eigenvectors().row(0).transpose().array().square();
}

}  // namespace

PosteriorPoint posterior_point(const ModelSpec& spec, const std::vector<Eigen::MatrixXd>& chains) {
    if (spec.variant != Variant::blv) throw StructuralError("posterior_point needs a BLV spec");
    const ParamLayout layout(spec);
    const int J = layout.ages();
    const int K = layout.K();
    const int n = layout.countries();
    const int rows = layout.rows();
    const Eigen::Index S = total_draws(chains);
    if (S < 2) throw InsufficientDataError("posterior_point needs at least 2 draws");

    PosteriorPoint pt;
    auto& p = pt.params;
    p.alpha = Eigen::MatrixXd::Zero(J, K);
    p.beta = Eigen::VectorXd::Zero(J);
    p.kappa = 0.0;
    p.phi = Eigen::VectorXd::Zero(n);
    p.sigma = Eigen::VectorXd::Zero(n);
    pt.eps_mean = Eigen::MatrixXd::Zero(rows, K);
    pt.eps_cov.assign(rows, Eigen::MatrixXd::Zero(K, K));

    for_each_draw(chains, [&](std::span<const double> x) {
        for (int j = 0; j < J; ++j) {
            for (int k = 0; k < K; ++k) p.alpha(j, k) += x[layout.alpha(j, k)];
            p.beta(j) += x[layout.beta(j)];
        }
        p.kappa += std::exp(x[layout.log_kappa()]);
        for (int i = 0; i < n; ++i) {
            p.phi(i) += std::tanh(x[layout.u_phi(i)]);
            p.sigma(i) += std::exp(x[layout.log_sigma(i)]);
        }
        for (int r = 0; r < rows; ++r) {
            for (int k = 0; k < K; ++k) pt.eps_mean(r, k) += x[layout.latent(r, k)];
        }
    });
    const double inv = 1.0 / static_cast<double>(S);
    p.alpha *= inv;
    p.beta *= inv;
    p.kappa *= inv;
    p.phi *= inv;
    p.sigma *= inv;
    pt.eps_mean *= inv;

    Eigen::VectorXd d(K);
    for_each_draw(chains, [&](std::span<const double> x) {
        for (int r = 0; r < rows; ++r) {
            for (int k = 0; k < K; ++k) d(k) = x[layout.latent(r, k)] - pt.eps_mean(r, k);
            pt.eps_cov[r].noalias() += d * d.transpose();
        }
    });
    for (auto& c : pt.eps_cov) c /= static_cast<double>(S - 1);
    return pt;
}

CountryEstimate country_marginal_loglik(const BlvParameters& params, const MortalityPanel& panel,
                                        int country, const std::vector<BlockProposal>& blocks,
                                        int M, Rng& rng) {
    const auto& s = panel.series(country);
    const int N = s.length();
    const int J = panel.age_count();
    const auto K = params.alpha.cols();
    if (static_cast<int>(blocks.size()) != N) {
        throw StructuralError(fmt::format("country {} needs {} proposal blocks, got {}", s.id, N,
                                          blocks.size()));
    }
    if (M < 1) throw std::invalid_argument("importance sample size must be >= 1");

    CountryEstimate est;
    std::vector<Eigen::MatrixXd> chol(N);
    double log_det_chol = 0.0;
    for (int t = 0; t < N; ++t) {
        Eigen::LLT<Eigen::MatrixXd> llt(blocks[t].cov);
        if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite()) {
            ++est.jittered_blocks;
            llt.compute(blocks[t].cov + 1e-8 * Eigen::MatrixXd::Identity(K, K));
            if (llt.info() != Eigen::Success) {
                throw ConvergenceError(
                    fmt::format("proposal covariance of country {}, period {} is not positive "
                                "definite after jitter",
                                s.id, s.first_time + t));
            }
        }
        chol[t] = llt.matrixL();
        log_det_chol += chol[t].diagonal().array().log().sum();
    }

    const Eigen::MatrixXd q = panel.values().middleRows(s.row_offset, N);
    const Eigen::MatrixXd log_q = q.array().log();
    const Eigen::MatrixXd log_1mq = (-q).array().log1p();
    const double kappa = params.kappa;
    const double lg_kappa = detail::log_gamma_pos(kappa);
    const double phi = params.phi(country);
    const double sigma = params.sigma(country);
    const double init_scale = sigma / std::sqrt(1.0 - phi * phi);

    std::vector<double> log_w(M);
    Eigen::VectorXd z(K), eps(K), theta(K);
    for (int m = 0; m < M; ++m) {
        double lw = log_det_chol;
        for (int t = 0; t < N; ++t) {
            for (Eigen::Index k = 0; k < K; ++k) z(k) = rng.normal();
            eps.noalias() = blocks[t].mean + chol[t] * z;
            // prior N(eps; 0, I) over proposal density; the 2 pi terms cancel
            lw += 0.5 * (z.squaredNorm() - eps.squaredNorm());
            theta = t == 0 ? Eigen::VectorXd(init_scale * eps)
                           : Eigen::VectorXd(phi * theta + sigma * eps);
            for (int x = 0; x < J; ++x) {
                const double mu = logistic(params.beta(x) + params.alpha.row(x).dot(theta));
                const double a = kappa * mu;
                const double b = kappa - a;
                lw += (a - 1.0) * log_q(t, x) + (b - 1.0) * log_1mq(t, x) -
                      detail::log_gamma_pos(a) - detail::log_gamma_pos(b) + lg_kappa;
            }
        }
        log_w[m] = lw;
    }

    const double top = *std::max_element(log_w.begin(), log_w.end());
    if (!std::isfinite(top)) {
        throw ConvergenceError(fmt::format("importance weights of country {} are not finite", s.id));
    }
    double sum = 0.0, sum_sq = 0.0;
    for (double lw : log_w) {
        const double w = std::exp(lw - top);
        sum += w;
        sum_sq += w * w;
    }
    const double Md = static_cast<double>(M);
    const double mean = sum / Md;
    est.log_marginal = top + std::log(mean);
    est.weight_ess = sum * sum / sum_sq;
    est.degenerate = est.weight_ess < 0.01 * Md;
    if (M > 1) {
        const double var = std::max(0.0, (sum_sq - Md * mean * mean) / (Md - 1.0));
        est.std_error = std::sqrt(var / Md) / mean;
    }
    return est;
}

MarginalLikelihoodEstimate is_marginal_loglik(const MortalityPanel& panel,
                                              const PosteriorPoint& point, int M,
                                              std::uint64_t seed, int threads) {
    const int n = panel.country_count();
    MarginalLikelihoodEstimate out;
    out.M = M;
    out.countries.resize(n);
    parallel_for(n, threads, [&](int i) {
        const auto& s = panel.series(i);
        std::vector<BlockProposal> blocks(s.length());
        for (int t = 0; t < s.length(); ++t) {
            blocks[t].mean = point.eps_mean.row(s.row_offset + t).transpose();
            blocks[t].cov = point.eps_cov[s.row_offset + t];
        }
        Rng rng(seed, kTagImportance, static_cast<std::uint64_t>(i));
        out.countries[i] = country_marginal_loglik(point.params, panel, i, blocks, M, rng);
    });
    double var = 0.0;
    for (const auto& c : out.countries) {
        out.total += c.log_marginal;
        var += c.std_error * c.std_error;
        out.jittered_blocks += c.jittered_blocks;
        out.degenerate_countries += c.degenerate ? 1 : 0;
    }
    out.total_std_error = std::sqrt(var);
    return out;
}

double bfa_marginal_loglik(const ModelSpec& spec, const Eigen::MatrixXd& centred_logit,
                           const std::vector<Eigen::MatrixXd>& chains) {
    const ParamLayout layout(spec);
    const int J = layout.ages();
    const Eigen::Index S = total_draws(chains);
    if (S < 1) throw InsufficientDataError("bfa_marginal_loglik needs draws");
    Eigen::MatrixXd alpha = Eigen::MatrixXd::Zero(J, layout.K());
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(J);
    for_each_draw(chains, [&](std::span<const double> x) {
        alpha += draw_loadings(layout, x);
        for (int j = 0; j < J; ++j) psi(j) += std::exp(x[layout.log_psi(j)]);
    });
    alpha /= static_cast<double>(S);
    psi /= static_cast<double>(S);
    Eigen::MatrixXd cov = alpha * alpha.transpose();
    cov.diagonal() += psi;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::MatrixXd L = llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    const Eigen::MatrixXd white = L.triangularView<Eigen::Lower>().solve(centred_logit.transpose());
    const auto R = static_cast<double>(centred_logit.rows());
    return -0.5 * (white.squaredNorm() + R * (log_det + J * kLog2Pi));
}

int parameter_count(const ModelSpec& spec) {
    const int J = spec.shape.ages;
    const int base = J * spec.K + J;
    return spec.variant == Variant::blv ? base + 1 + 2 * spec.shape.countries : base;
}

int observation_count(const MortalityPanel& panel) {
    return panel.row_count() * panel.age_count();
}

double bic_m(double log_marginal, double v, double N) { return -2.0 * log_marginal + v * std::log(N); }

void WaicAccumulator::add(const Eigen::Ref<const Eigen::MatrixXd>& pointwise) {
    const Eigen::ArrayXXd v = pointwise.array();
    if (draws_ == 0) {
        max_ = v;
        sum_exp_ = Eigen::ArrayXXd::Ones(v.rows(), v.cols());
        mean_ = v;
        m2_ = Eigen::ArrayXXd::Zero(v.rows(), v.cols());
        draws_ = 1;
        return;
    }
    if (v.rows() != max_.rows() || v.cols() != max_.cols()) {
        throw StructuralError("pointwise log likelihood changed shape between draws");
    }
    ++draws_;
    const double inv = 1.0 / static_cast<double>(draws_);
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            const double x = v(i, j);
            if (x > max_(i, j)) {
                sum_exp_(i, j) = sum_exp_(i, j) * std::exp(max_(i, j) - x) + 1.0;
                max_(i, j) = x;
            } else {
                sum_exp_(i, j) += std::exp(x - max_(i, j));
            }
            const double delta = x - mean_(i, j);
            mean_(i, j) += delta * inv;
            m2_(i, j) += delta * (x - mean_(i, j));
        }
    }
}

WaicResult WaicAccumulator::result() const {
    if (draws_ == 0) throw InsufficientDataError("WAIC needs at least one draw");
    WaicResult r;
    const double log_s = std::log(static_cast<double>(draws_));
    r.lppd = (max_ + sum_exp_.log()).sum() - log_s * static_cast<double>(max_.size());
    if (draws_ > 1) {
        const Eigen::ArrayXXd var = m2_ / static_cast<double>(draws_ - 1);
        r.p_waic = var.sum();
        r.flagged = static_cast<int>((var > 0.4).count());
    }
    r.observations = static_cast<int>(max_.size());
    r.waic = -2.0 * (r.lppd - r.p_waic);
    return r;
}

WaicResult waic(const Eigen::MatrixXd& loglik) {
    WaicAccumulator acc;
    for (Eigen::Index s = 0; s < loglik.rows(); ++s) acc.add(loglik.row(s));
    return acc.result();
}

WaicResult waic_c(const ModelSpec& spec, const MortalityPanel& panel,
                  const std::vector<Eigen::MatrixXd>& chains) {
    WaicAccumulator acc;
    if (spec.variant == Variant::blv) {
        const BlvPosterior post(spec, panel);
        for_each_draw(chains, [&](std::span<const double> x) {
            acc.add(post.pointwise_log_likelihood(x));
        });
    } else {
        const ParamLayout layout(spec);
        const Eigen::MatrixXd y = logit_transform(panel, true);
        for_each_draw(chains, [&](std::span<const double> x) {
            const Eigen::MatrixXd resid = y - latent_block(layout, x) *
                                                  draw_loadings(layout, x).transpose();
            Eigen::MatrixXd ll(y.rows(), y.cols());
            for (Eigen::Index j = 0; j < y.cols(); ++j) {
                const double lp = x[layout.log_psi(static_cast<int>(j))];
                ll.col(j) = -0.5 * (kLog2Pi + lp + resid.col(j).array().square() * std::exp(-lp));
            }
            acc.add(ll);
        });
    }
    return acc.result();
}

Eigen::MatrixXd posterior_predict_mean(const ModelSpec& spec, const MortalityPanel& panel,
                                       const std::vector<Eigen::MatrixXd>& chains) {
    const ParamLayout layout(spec);
    const int J = layout.ages();
    const Eigen::Index S = total_draws(chains);
    if (S < 1) throw InsufficientDataError("posterior_predict_mean needs draws");
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(layout.rows(), J);
    if (spec.variant == Variant::blv) {
        for_each_draw(chains, [&](std::span<const double> x) {
            const Eigen::MatrixXd theta = latent_states(spec, x);
            const BlvParameters p = BlvParameters::unpack(layout, x);
            Eigen::MatrixXd eta = theta * p.alpha.transpose();
            eta.rowwise() += p.beta.transpose();
            acc += eta.unaryExpr([](double e) { return logistic(e); });
        });
    } else {
        const Eigen::RowVectorXd centre = logit_transform(panel, false).colwise().mean();
        Eigen::VectorXd nodes, weights;
        gauss_hermite_normal(32, nodes, weights);
        for_each_draw(chains, [&](std::span<const double> x) {
            Eigen::MatrixXd eta = latent_block(layout, x) * draw_loadings(layout, x).transpose();
            eta.rowwise() += centre;
            for (int j = 0; j < J; ++j) {
                const double sd = std::exp(0.5 * x[layout.log_psi(j)]);
                for (Eigen::Index r = 0; r < eta.rows(); ++r) {
                    double m = 0.0;
                    for (Eigen::Index g = 0; g < nodes.size(); ++g) {
                        m += weights(g) * logistic(eta(r, j) + sd * nodes(g));
                    }
                    acc(r, j) += m;
                }
            }
        });
    }
    return acc / static_cast<double>(S);
}

Eigen::MatrixXd latent_mean(const ModelSpec& spec, const std::vector<Eigen::MatrixXd>& chains) {
    const Eigen::Index S = total_draws(chains);
    if (S < 1) throw InsufficientDataError("latent_mean needs draws");
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(spec.shape.rows, spec.K);
    for_each_draw(chains, [&](std::span<const double> x) { acc += latent_states(spec, x); });
    return acc / static_cast<double>(S);
}

FitMetrics fit_metrics(const Eigen::MatrixXd& q_hat, const MortalityPanel& panel) {
    const Eigen::MatrixXd& q = panel.values();
    if (q_hat.rows() != q.rows() || q_hat.cols() != q.cols()) {
        throw StructuralError("fit_metrics: fitted and observed matrices differ in shape");
    }
    const auto N = static_cast<double>(q.size());
    FitMetrics m;
    m.rmse = std::sqrt((q_hat - q).squaredNorm() / N);
    m.mape = 100.0 / N * ((q_hat - q).array().abs() / q.array()).sum();
    return m;
}

Eigen::VectorXd pairwise_distances(const Eigen::MatrixXd& rows) {
    const Eigen::Index n = rows.rows();
    Eigen::VectorXd d(n * (n - 1) / 2);
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) d(at++) = (rows.row(i) - rows.row(j)).norm();
    }
    return d;
}

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw InsufficientDataError("spearman needs two equal-length vectors of length >= 2");
    }
    Eigen::VectorXd ra = average_ranks(a);
    Eigen::VectorXd rb = average_ranks(b);
    ra.array() -= ra.mean();
    rb.array() -= rb.mean();
    const double den = ra.norm() * rb.norm();
    if (!(den > 0.0)) throw UndefinedStatisticError("spearman: a vector is constant");
    return ra.dot(rb) / den;
}

DistanceMetrics distance_metrics(const Eigen::MatrixXd& q_observed, const Eigen::MatrixXd& q_hat,
                                 const Eigen::MatrixXd& latent) {
    const Eigen::VectorXd d_obs = pairwise_distances(q_observed);
    const Eigen::VectorXd d_pred = pairwise_distances(q_hat);
    const Eigen::VectorXd d_lat = pairwise_distances(latent);
    DistanceMetrics m;
    const auto P = static_cast<double>(d_obs.size());
    m.rmse = std::sqrt((d_pred - d_obs).squaredNorm() / P);
    double sum = 0.0;
    Eigen::Index used = 0;
    for (Eigen::Index p = 0; p < d_obs.size(); ++p) {
        if (d_obs(p) > 0.0) {
            sum += std::abs(d_pred(p) - d_obs(p)) / d_obs(p);
            ++used;
        }
    }
    m.mape = used > 0 ? 100.0 * sum / static_cast<double>(used) : 0.0;
    m.cophenetic = spearman(d_obs, d_lat);
    return m;
}

Summary log_kappa_summary(const ModelSpec& spec, const std::vector<Eigen::MatrixXd>& chains,
                          double level) {
    const ParamLayout layout(spec);
    std::vector<double> v;
    for (const auto& c : chains) {
        for (Eigen::Index s = 0; s < c.rows(); ++s) v.push_back(c(s, layout.log_kappa()));
    }
    return summarize(v, level);
}

SelectionRow evaluate_fit(const MortalityPanel& panel, const FitResult& fit,
                          const SelectionOptions& options) {
    SelectionRow row;
    row.K = fit.spec.K;
    row.variant = fit.spec.variant;
    row.max_r_hat = fit.max_r_hat;
    row.divergences = fit.divergences();

    if (fit.spec.variant == Variant::blv) {
        const PosteriorPoint pt = posterior_point(fit.spec, fit.chains);
        const auto ml = is_marginal_loglik(panel, pt, options.is_samples, options.seed,
                                           options.threads);
        row.log_marginal = ml.total;
        row.log_marginal_se = ml.total_std_error;
        const Summary lk = log_kappa_summary(fit.spec, fit.chains, fit.options.level);
        row.log_kappa_mean = lk.mean;
        row.log_kappa_low = lk.hpd_low;
        row.log_kappa_high = lk.hpd_high;
    } else {
        row.log_marginal = bfa_marginal_loglik(fit.spec, logit_transform(panel, true), fit.chains);
    }
    row.bic_m = bic_m(row.log_marginal, parameter_count(fit.spec), observation_count(panel));
    const WaicResult w = waic_c(fit.spec, panel, fit.chains);
    row.waic_c = w.waic;
    row.p_waic = w.p_waic;
    row.waic_flagged = w.flagged;

    const Eigen::MatrixXd q_hat = posterior_predict_mean(fit.spec, panel, fit.chains);
    const FitMetrics fm = fit_metrics(q_hat, panel);
    row.rmse_q = fm.rmse;
    row.mape_q = fm.mape;
    const DistanceMetrics dm =
        distance_metrics(panel.values(), q_hat, latent_mean(fit.spec, fit.chains));
    row.rmse_d = dm.rmse;
    row.mape_d = dm.mape;
    row.cophenetic = dm.cophenetic;
    row.complete = true;
    return row;
}

void SelectionReport::flag_minimum() {
    SelectionRow* best = nullptr;
    for (auto& r : rows) {
        r.min_bic = false;
        if (r.complete && (best == nullptr || r.bic_m < best->bic_m)) best = &r;
    }
    if (best) best->min_bic = true;
}

std::optional<int> SelectionReport::selected_by_bic() const {
    const SelectionRow* best = nullptr;
    for (const auto& r : rows) {
        if (r.complete && (best == nullptr || r.bic_m < best->bic_m)) best = &r;
    }
    return best ? std::optional<int>(best->K) : std::nullopt;
}

std::optional<int> SelectionReport::selected_by_waic() const {
    const SelectionRow* best = nullptr;
    for (const auto& r : rows) {
        if (r.complete && (best == nullptr || r.waic_c < best->waic_c)) best = &r;
    }
    return best ? std::optional<int>(best->K) : std::nullopt;
}

std::string SelectionReport::to_csv() const {
    std::string out =
        "K,variant,complete,log_marginal,log_marginal_se,bic_m,waic_c,p_waic,waic_flagged,"
        "log_kappa_mean,log_kappa_low,log_kappa_high,rmse_q,mape_q,rmse_d,mape_d,cophenetic,"
        "max_r_hat,divergences,min_bic,error\n";
    for (const auto& r : rows) {
        const bool blv = r.variant == Variant::blv;
        auto lk = [&](double v) { return blv && r.complete ? fmt::format("{}", v) : std::string(); };
        auto num = [&](double v) { return r.complete ? fmt::format("{}", v) : std::string(); };
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.K,
                           to_string(r.variant), r.complete ? 1 : 0, num(r.log_marginal),
                           num(r.log_marginal_se), num(r.bic_m), num(r.waic_c), num(r.p_waic),
                           r.waic_flagged, lk(r.log_kappa_mean), lk(r.log_kappa_low),
                           lk(r.log_kappa_high), num(r.rmse_q), num(r.mape_q), num(r.rmse_d),
                           num(r.mape_d), num(r.cophenetic), r.max_r_hat, r.divergences,
                           r.min_bic ? 1 : 0, err);
    }
    return out;
}

nlohmann::json SelectionReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j{{"K", r.K},
                         {"variant", to_string(r.variant)},
                         {"complete", r.complete},
                         {"max_r_hat", r.max_r_hat},
                         {"divergences", r.divergences},
                         {"min_bic", r.min_bic}};
        if (r.complete) {
            j["log_marginal"] = r.log_marginal;
            j["log_marginal_se"] = r.log_marginal_se;
            j["bic_m"] = r.bic_m;
            j["waic_c"] = r.waic_c;
            j["p_waic"] = r.p_waic;
            j["waic_flagged"] = r.waic_flagged;
            j["rmse_q"] = r.rmse_q;
            j["mape_q"] = r.mape_q;
            j["rmse_d"] = r.rmse_d;
            j["mape_d"] = r.mape_d;
            j["cophenetic"] = r.cophenetic;
            if (r.variant == Variant::blv) {
                j["log_kappa"] = {{"mean", r.log_kappa_mean},
                                  {"hpd_low", r.log_kappa_low},
                                  {"hpd_high", r.log_kappa_high}};
            }
        } else {
            j["error"] = r.error;
        }
        arr.push_back(std::move(j));
    }
    return {{"rows", arr}};
}

}  // namespace blv
