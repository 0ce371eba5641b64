#include "blv/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "blv/distributions.hpp"
#include "blv/error.hpp"

namespace blv {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double normal_lpdf(double x, double variance) {
    return -0.5 * (x * x / variance + kLog2Pi + std::log(variance));
}

/// log(1 - tanh(u)^2), stable for large |u|.
double log_sech2(double u) {
    const double a = std::abs(u);
    return -2.0 * (a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2);
}

double sech2(double u) {
    const double c = std::cosh(u);
    return 1.0 / (c * c);
}

}  // namespace

std::string to_string(Variant v) { return v == Variant::blv ? "blv" : "bfa"; }

Variant parse_variant(const std::string& s) {
    if (s == "blv") return Variant::blv;
    if (s == "bfa") return Variant::bfa;
    throw Error("unknown model variant '" + s + "' (expected blv or bfa)");
}

PanelShape PanelShape::of(const MortalityPanel& panel) {
    PanelShape s;
    s.countries = panel.country_count();
    s.ages = panel.age_count();
    s.rows = panel.row_count();
    for (const auto& c : panel.series()) {
        s.first_time.push_back(c.first_time);
        s.lengths.push_back(c.length());
        s.row_offsets.push_back(c.row_offset);
    }
    return s;
}

ModelSpec ModelSpec::for_panel(const MortalityPanel& panel, int K, Variant variant,
                               PriorScales priors) {
    if (K < 1 || K > panel.age_count()) {
        throw StructuralError(
            fmt::format("latent dimension K={} must lie in [1, J={}]", K, panel.age_count()));
    }
    return ModelSpec{variant, K, PanelShape::of(panel), priors};
}

void ModelSpec::check_against(const MortalityPanel& panel) const {
    if (!(PanelShape::of(panel) == shape)) {
        throw StructuralError("panel dimensions do not match the model specification");
    }
}

ParamLayout::ParamLayout(const ModelSpec& spec)
    : variant_(spec.variant),
      K_(spec.K),
      J_(spec.shape.ages),
      n_(spec.shape.countries),
      rows_(spec.shape.rows) {
    int off = 0;
    alpha_ = off;
    off += J_ * K_;
    if (variant_ == Variant::blv) {
        beta_ = off;
        off += J_;
        log_kappa_ = off++;
        u_phi_ = off;
        off += n_;
        log_sigma_ = off;
        off += n_;
    } else {
        log_psi_ = off;
        off += J_;
    }
    latent_ = off;
    off += rows_ * K_;
    size_ = off;
}

std::vector<std::string> ParamLayout::names(const MortalityPanel& panel) const {
    std::vector<std::string> out(size_);
    const auto& ages = panel.ages();
    for (int x = 0; x < J_; ++x) {
        for (int k = 0; k < K_; ++k) {
            out[alpha(x, k)] = fmt::format("alpha[x={},k={}]", ages[x].lower_bound(), k + 1);
        }
    }
    if (variant_ == Variant::blv) {
        for (int x = 0; x < J_; ++x) out[beta(x)] = fmt::format("beta[x={}]", ages[x].lower_bound());
        out[log_kappa()] = "log_kappa";
        for (int i = 0; i < n_; ++i) {
            out[u_phi(i)] = fmt::format("u_phi[c={}]", panel.series(i).id);
            out[log_sigma(i)] = fmt::format("log_sigma[c={}]", panel.series(i).id);
        }
    } else {
        for (int x = 0; x < J_; ++x) {
            out[log_psi(x)] = fmt::format("log_psi[x={}]", ages[x].lower_bound());
        }
    }
    const char* latent_name = variant_ == Variant::blv ? "eps" : "theta";
    for (const auto& s : panel.series()) {
        for (int t = 0; t < s.length(); ++t) {
            for (int k = 0; k < K_; ++k) {
                out[latent(s.row_offset + t, k)] = fmt::format("{}[c={},t={},k={}]", latent_name,
                                                               s.id, s.first_time + t, k + 1);
            }
        }
    }
    return out;
}

nlohmann::json ParamLayout::to_json() const {
    nlohmann::json j;
    j["variant"] = to_string(variant_);
    j["K"] = K_;
    j["J"] = J_;
    j["n"] = n_;
    j["rows"] = rows_;
    j["size"] = size_;
    nlohmann::json blocks = nlohmann::json::array();
    auto add = [&](const char* name, int offset, int length) {
        blocks.push_back({{"name", name}, {"offset", offset}, {"length", length}});
    };
    add("alpha", alpha_, J_ * K_);
    if (variant_ == Variant::blv) {
        add("beta", beta_, J_);
        add("log_kappa", log_kappa_, 1);
        add("u_phi", u_phi_, n_);
        add("log_sigma", log_sigma_, n_);
        add("eps", latent_, rows_ * K_);
    } else {
        add("log_psi", log_psi_, J_);
        add("theta", latent_, rows_ * K_);
    }
    j["blocks"] = blocks;
    return j;
}

BlvParameters BlvParameters::unpack(const ParamLayout& layout, std::span<const double> x) {
    const int J = layout.ages();
    const int K = layout.K();
    const int n = layout.countries();
    BlvParameters p;
    p.alpha.resize(J, K);
    p.beta.resize(J);
    p.phi.resize(n);
    p.sigma.resize(n);
    for (int j = 0; j < J; ++j) {
        for (int k = 0; k < K; ++k) p.alpha(j, k) = x[layout.alpha(j, k)];
        p.beta(j) = x[layout.beta(j)];
    }
    p.kappa = std::exp(x[layout.log_kappa()]);
    for (int i = 0; i < n; ++i) {
        p.phi(i) = std::tanh(x[layout.u_phi(i)]);
        p.sigma(i) = std::exp(x[layout.log_sigma(i)]);
    }
    return p;
}

void BlvParameters::pack(const ParamLayout& layout, std::span<double> x) const {
    for (int j = 0; j < layout.ages(); ++j) {
        for (int k = 0; k < layout.K(); ++k) x[layout.alpha(j, k)] = alpha(j, k);
        x[layout.beta(j)] = beta(j);
    }
    x[layout.log_kappa()] = std::log(kappa);
    for (int i = 0; i < layout.countries(); ++i) {
        x[layout.u_phi(i)] = std::atanh(phi(i));
        x[layout.log_sigma(i)] = std::log(sigma(i));
    }
}

Eigen::MatrixXd country_states(double phi, double sigma,
                               const Eigen::Ref<const Eigen::MatrixXd>& eps) {
    Eigen::MatrixXd theta(eps.rows(), eps.cols());
    if (eps.rows() == 0) return theta;
    theta.row(0) = sigma / std::sqrt(1.0 - phi * phi) * eps.row(0);
    for (Eigen::Index t = 1; t < eps.rows(); ++t) {
        theta.row(t) = phi * theta.row(t - 1) + sigma * eps.row(t);
    }
    return theta;
}

Eigen::MatrixXd country_increments(double phi, double sigma,
                                   const Eigen::Ref<const Eigen::MatrixXd>& theta) {
    Eigen::MatrixXd eps(theta.rows(), theta.cols());
    if (theta.rows() == 0) return eps;
    eps.row(0) = std::sqrt(1.0 - phi * phi) / sigma * theta.row(0);
    for (Eigen::Index t = 1; t < theta.rows(); ++t) {
        eps.row(t) = (theta.row(t) - phi * theta.row(t - 1)) / sigma;
    }
    return eps;
}

Eigen::MatrixXd latent_block(const ParamLayout& layout, std::span<const double> x) {
    Eigen::MatrixXd out(layout.rows(), layout.K());
    for (int r = 0; r < layout.rows(); ++r) {
        for (int k = 0; k < layout.K(); ++k) out(r, k) = x[layout.latent(r, k)];
    }
    return out;
}

void set_latent_block(const ParamLayout& layout, const Eigen::Ref<const Eigen::MatrixXd>& block,
                      std::span<double> x) {
    for (int r = 0; r < layout.rows(); ++r) {
        for (int k = 0; k < layout.K(); ++k) x[layout.latent(r, k)] = block(r, k);
    }
}

Eigen::MatrixXd latent_states(const ModelSpec& spec, std::span<const double> x) {
    const ParamLayout layout(spec);
    const Eigen::MatrixXd eps = latent_block(layout, x);
    if (spec.variant == Variant::bfa) return eps;
    Eigen::MatrixXd theta(layout.rows(), layout.K());
    for (int i = 0; i < spec.shape.countries; ++i) {
        const int off = spec.shape.row_offsets[i];
        const int len = spec.shape.lengths[i];
        theta.middleRows(off, len) =
            country_states(std::tanh(x[layout.u_phi(i)]), std::exp(x[layout.log_sigma(i)]),
                           eps.middleRows(off, len));
    }
    return theta;
}

double expected_mortality(const ModelSpec& spec, const ParamVector& params, int i, int t, int x) {
    const auto& layout = params.layout;
    const std::span<const double> v(params.values.data(), params.values.size());
    const Eigen::MatrixXd theta = latent_states(spec, v);
    const int r = spec.shape.row(i, t);
    double eta = v[layout.beta(x)];
    for (int k = 0; k < layout.K(); ++k) eta += v[layout.alpha(x, k)] * theta(r, k);
    return logistic(eta);
}

double country_log_likelihood(const BlvParameters& params, const MortalityPanel& panel, int i,
                              const Eigen::Ref<const Eigen::MatrixXd>& theta) {
    const auto& s = panel.series(i);
    const int J = panel.age_count();
    const double kappa = params.kappa;
    const double lg_kappa = detail::log_gamma_pos(kappa);
    double ll = 0.0;
    for (int t = 0; t < s.length(); ++t) {
        const int r = s.row_offset + t;
        for (int x = 0; x < J; ++x) {
            const double eta = params.beta(x) + params.alpha.row(x).dot(theta.row(t));
            const double mu = logistic(eta);
            const double a = kappa * mu;
            const double b = kappa - a;
            const double q = panel.values()(r, x);
            ll += (a - 1.0) * std::log(q) + (b - 1.0) * std::log1p(-q) -
                  detail::log_gamma_pos(a) - detail::log_gamma_pos(b) + lg_kappa;
        }
    }
    return ll;
}

BlvPosterior::BlvPosterior(ModelSpec spec, const MortalityPanel& panel)
    : spec_(std::move(spec)), layout_(spec_) {
    if (spec_.variant != Variant::blv) throw StructuralError("BlvPosterior needs a BLV spec");
    spec_.check_against(panel);
    log_q_ = panel.values().array().log();
    log_1mq_ = (-panel.values()).array().log1p();
}

double BlvPosterior::log_density(std::span<const double> x) const {
    return evaluate(x, nullptr, true);
}

double BlvPosterior::log_density_gradient(std::span<const double> x, std::span<double> grad) const {
    if (static_cast<int>(grad.size()) != layout_.size()) {
        throw StructuralError("gradient buffer has the wrong length");
    }
    return evaluate(x, grad.data(), true);
}

double BlvPosterior::log_likelihood(std::span<const double> x) const {
    return evaluate(x, nullptr, false);
}

Eigen::MatrixXd BlvPosterior::pointwise_log_likelihood(std::span<const double> x) const {
    const BlvParameters p = BlvParameters::unpack(layout_, x);
    const Eigen::MatrixXd theta = latent_states(spec_, x);
    const double lg_kappa = detail::log_gamma_pos(p.kappa);
    Eigen::MatrixXd out(layout_.rows(), layout_.ages());
    for (int r = 0; r < layout_.rows(); ++r) {
        for (int j = 0; j < layout_.ages(); ++j) {
            const double mu = logistic(p.beta(j) + p.alpha.row(j).dot(theta.row(r)));
            const double a = p.kappa * mu;
            const double b = p.kappa - a;
            out(r, j) = (a - 1.0) * log_q_(r, j) + (b - 1.0) * log_1mq_(r, j) -
                        detail::log_gamma_pos(a) - detail::log_gamma_pos(b) + lg_kappa;
        }
    }
    return out;
}

double BlvPosterior::evaluate(std::span<const double> x, double* grad, bool with_prior) const {
    if (static_cast<int>(x.size()) != layout_.size()) {
        throw StructuralError(fmt::format("parameter vector has length {}, expected {}", x.size(),
                                          layout_.size()));
    }
    const int J = layout_.ages();
    const int K = layout_.K();
    const int n = layout_.countries();
    const auto& pr = spec_.priors;
    if (grad != nullptr) std::fill_n(grad, layout_.size(), 0.0);

    const double log_kappa = x[layout_.log_kappa()];
    const double kappa = std::exp(log_kappa);
    const double lg_kappa = detail::log_gamma_pos(kappa);
    const double psi_kappa = grad != nullptr ? detail::digamma_pos(kappa) : 0.0;

    double lp = 0.0;
    double d_kappa = 0.0;

    int max_len = 0;
    for (int len : spec_.shape.lengths) max_len = std::max(max_len, len);
    Eigen::MatrixXd theta(max_len, K);
    Eigen::MatrixXd d_theta(max_len, K);
    Eigen::VectorXd carry(K);

    for (int i = 0; i < n; ++i) {
        const int off = spec_.shape.row_offsets[i];
        const int len = spec_.shape.lengths[i];
        const double u = x[layout_.u_phi(i)];
        const double phi = std::tanh(u);
        const double one_m_phi2 = sech2(u);
        const double sigma = std::exp(x[layout_.log_sigma(i)]);
        const double root = std::sqrt(one_m_phi2);
        const double c0 = sigma / root;

        for (int k = 0; k < K; ++k) theta(0, k) = c0 * x[layout_.latent(off, k)];
        for (int t = 1; t < len; ++t) {
            for (int k = 0; k < K; ++k) {
                theta(t, k) = phi * theta(t - 1, k) + sigma * x[layout_.latent(off + t, k)];
            }
        }

        if (grad != nullptr) d_theta.topRows(len).setZero();
        for (int t = 0; t < len; ++t) {
            const int r = off + t;
            for (int j = 0; j < J; ++j) {
                double eta = x[layout_.beta(j)];
                for (int k = 0; k < K; ++k) eta += x[layout_.alpha(j, k)] * theta(t, k);
                const double mu = logistic(eta);
                const double a = kappa * mu;
                const double b = kappa - a;
                const double lq = log_q_(r, j);
                const double l1q = log_1mq_(r, j);
                if (grad == nullptr) {
                    lp += (a - 1.0) * lq + (b - 1.0) * l1q - detail::log_gamma_pos(a) -
                          detail::log_gamma_pos(b) + lg_kappa;
                    continue;
                }
                double lg_a, lg_b, psi_a, psi_b;
                detail::log_gamma_digamma_pos(a, lg_a, psi_a);
                detail::log_gamma_digamma_pos(b, lg_b, psi_b);
                lp += (a - 1.0) * lq + (b - 1.0) * l1q - lg_a - lg_b + lg_kappa;
                const double d_mu = kappa * (lq - l1q - psi_a + psi_b);
                const double d_eta = d_mu * mu * (1.0 - mu);
                d_kappa += mu * lq + (1.0 - mu) * l1q - mu * psi_a - (1.0 - mu) * psi_b + psi_kappa;
                grad[layout_.beta(j)] += d_eta;
                for (int k = 0; k < K; ++k) {
                    grad[layout_.alpha(j, k)] += d_eta * theta(t, k);
                    d_theta(t, k) += d_eta * x[layout_.alpha(j, k)];
                }
            }
        }

        if (grad == nullptr) continue;
        // Reverse pass through the AR(1) recursion; carry holds the total
        // adjoint of theta_t including contributions from later periods.
        double d_phi = 0.0;
        double d_sigma = 0.0;
        carry.setZero();
        for (int t = len - 1; t >= 1; --t) {
            for (int k = 0; k < K; ++k) {
                const double g = d_theta(t, k) + phi * carry(k);
                const double e = x[layout_.latent(off + t, k)];
                grad[layout_.latent(off + t, k)] += sigma * g;
                d_sigma += g * e;
                d_phi += g * theta(t - 1, k);
                carry(k) = g;
            }
        }
        double d_c0 = 0.0;
        for (int k = 0; k < K; ++k) {
            const double g = d_theta(0, k) + (len > 1 ? phi * carry(k) : 0.0);
            const double e = x[layout_.latent(off, k)];
            grad[layout_.latent(off, k)] += c0 * g;
            d_c0 += g * e;
        }
        d_sigma += d_c0 / root;
        d_phi += d_c0 * sigma * phi / (one_m_phi2 * root);
        grad[layout_.u_phi(i)] += d_phi * one_m_phi2;
        grad[layout_.log_sigma(i)] += d_sigma * sigma;
    }
    if (grad != nullptr) grad[layout_.log_kappa()] += d_kappa * kappa;

    if (!with_prior) return lp;

    for (int j = 0; j < J; ++j) {
        for (int k = 0; k < K; ++k) {
            const double a = x[layout_.alpha(j, k)];
            lp += normal_lpdf(a, pr.alpha_variance);
            if (grad != nullptr) grad[layout_.alpha(j, k)] -= a / pr.alpha_variance;
        }
        const double b = x[layout_.beta(j)];
        lp += normal_lpdf(b, pr.beta_variance);
        if (grad != nullptr) grad[layout_.beta(j)] -= b / pr.beta_variance;
    }
    lp += normal_lpdf(log_kappa, pr.log_kappa_variance);
    if (grad != nullptr) grad[layout_.log_kappa()] -= log_kappa / pr.log_kappa_variance;
    for (int i = 0; i < n; ++i) {
        const double u = x[layout_.u_phi(i)];
        // Uniform(-1,1) on phi = tanh(u): density 1/2 times the Jacobian.
        lp += -std::numbers::ln2 + log_sech2(u);
        const double ls = x[layout_.log_sigma(i)];
        lp += normal_lpdf(ls, pr.log_sigma_variance);
        if (grad != nullptr) {
            grad[layout_.u_phi(i)] -= 2.0 * std::tanh(u);
            grad[layout_.log_sigma(i)] -= ls / pr.log_sigma_variance;
        }
    }
    const int latent_end = layout_.latent_offset() + layout_.rows() * K;
    for (int idx = layout_.latent_offset(); idx < latent_end; ++idx) {
        lp += -0.5 * (x[idx] * x[idx] + kLog2Pi);
        if (grad != nullptr) grad[idx] -= x[idx];
    }
    return lp;
}

double log_posterior(const ModelSpec& spec, const ParamVector& params,
                     const MortalityPanel& panel) {
    const BlvPosterior post(spec, panel);
    return post.log_density({params.values.data(), static_cast<std::size_t>(params.values.size())});
}

Eigen::VectorXd log_posterior_grad(const ModelSpec& spec, const ParamVector& params,
                                   const MortalityPanel& panel) {
    const BlvPosterior post(spec, panel);
    Eigen::VectorXd g(post.dimension());
    post.log_density_gradient(
        {params.values.data(), static_cast<std::size_t>(params.values.size())},
        {g.data(), static_cast<std::size_t>(g.size())});
    return g;
}

BfaPosterior::BfaPosterior(ModelSpec spec, Eigen::MatrixXd centred_logit)
    : spec_(std::move(spec)), layout_(spec_), y_(std::move(centred_logit)) {
    if (spec_.variant != Variant::bfa) throw StructuralError("BfaPosterior needs a BFA spec");
    if (y_.rows() != spec_.shape.rows || y_.cols() != spec_.shape.ages) {
        throw StructuralError("BFA data matrix does not match the model specification");
    }
}

double BfaPosterior::log_density(std::span<const double> x) const { return evaluate(x, nullptr); }

double BfaPosterior::log_density_gradient(std::span<const double> x, std::span<double> grad) const {
    if (static_cast<int>(grad.size()) != layout_.size()) {
        throw StructuralError("gradient buffer has the wrong length");
    }
    return evaluate(x, grad.data());
}

double BfaPosterior::evaluate(std::span<const double> x, double* grad) const {
    if (static_cast<int>(x.size()) != layout_.size()) {
        throw StructuralError(fmt::format("parameter vector has length {}, expected {}", x.size(),
                                          layout_.size()));
    }
    const int J = layout_.ages();
    const int K = layout_.K();
    const int R = layout_.rows();
    const auto& pr = spec_.priors;

    Eigen::MatrixXd alpha(J, K);
    for (int j = 0; j < J; ++j)
        for (int k = 0; k < K; ++k) alpha(j, k) = x[layout_.alpha(j, k)];
    const Eigen::MatrixXd theta = latent_block(layout_, x);
    Eigen::VectorXd log_psi(J);
    for (int j = 0; j < J; ++j) log_psi(j) = x[layout_.log_psi(j)];
    const Eigen::ArrayXd inv_psi = (-log_psi.array()).exp();

    const Eigen::MatrixXd resid = y_ - theta * alpha.transpose();
    const Eigen::ArrayXd ss = resid.array().square().colwise().sum().transpose();

    double lp = -0.5 * (R * J * kLog2Pi + R * log_psi.sum() + (ss * inv_psi).sum());
    for (int j = 0; j < J; ++j) {
        for (int k = 0; k < K; ++k) lp += normal_lpdf(alpha(j, k), pr.alpha_variance);
        lp += normal_lpdf(log_psi(j), pr.log_psi_variance);
    }
    lp += -0.5 * (theta.squaredNorm() + R * K * kLog2Pi);

    if (grad == nullptr) return lp;
    std::fill_n(grad, layout_.size(), 0.0);
    const Eigen::MatrixXd scaled = resid * inv_psi.matrix().asDiagonal();
    const Eigen::MatrixXd d_alpha = scaled.transpose() * theta - alpha / pr.alpha_variance;
    const Eigen::MatrixXd d_theta = scaled * alpha - theta;
    for (int j = 0; j < J; ++j) {
        for (int k = 0; k < K; ++k) grad[layout_.alpha(j, k)] = d_alpha(j, k);
        grad[layout_.log_psi(j)] =
            -0.5 * R + 0.5 * ss(j) * inv_psi(j) - log_psi(j) / pr.log_psi_variance;
    }
    for (int r = 0; r < R; ++r)
        for (int k = 0; k < K; ++k) grad[layout_.latent(r, k)] = d_theta(r, k);
    return lp;
}

double bfa_log_posterior(const ModelSpec& spec, const ParamVector& params,
                         const Eigen::MatrixXd& centred_logit) {
    const BfaPosterior post(spec, centred_logit);
    return post.log_density({params.values.data(), static_cast<std::size_t>(params.values.size())});
}

Eigen::VectorXd bfa_log_posterior_grad(const ModelSpec& spec, const ParamVector& params,
                                       const Eigen::MatrixXd& centred_logit) {
    const BfaPosterior post(spec, centred_logit);
    Eigen::VectorXd g(post.dimension());
    post.log_density_gradient(
        {params.values.data(), static_cast<std::size_t>(params.values.size())},
        {g.data(), static_cast<std::size_t>(g.size())});
    return g;
}

namespace {

/// Per-column sufficient statistics of the intercept-only likelihood.
struct InterceptStats {
    double count;
    Eigen::VectorXd sum_log_q;
    Eigen::VectorXd sum_log_1mq;
};

InterceptStats intercept_stats(const MortalityPanel& panel) {
    return {static_cast<double>(panel.row_count()),
            panel.values().array().log().colwise().sum().transpose(),
            (-panel.values()).array().log1p().colwise().sum().transpose()};
}

struct InterceptEval {
    double value = 0.0;
    Eigen::VectorXd grad;  // (beta..., log kappa)
    Eigen::MatrixXd hess;
};

InterceptEval intercept_eval(const InterceptStats& st, const Eigen::VectorXd& beta,
                             double log_kappa, bool second_order) {
    const int J = static_cast<int>(beta.size());
    const double kappa = std::exp(log_kappa);
    const double n = st.count;
    InterceptEval out;
    out.grad = Eigen::VectorXd::Zero(J + 1);
    if (second_order) out.hess = Eigen::MatrixXd::Zero(J + 1, J + 1);
    const double psi_k = detail::digamma_pos(kappa);
    const double tri_k = second_order ? detail::trigamma_pos(kappa) : 0.0;
    double dl_dk = 0.0;
    double d2l_dk2 = 0.0;
    for (int j = 0; j < J; ++j) {
        const double mu = logistic(beta(j));
        const double w = mu * (1.0 - mu);
        const double a = kappa * mu;
        const double b = kappa - a;
        const double s1 = st.sum_log_q(j);
        const double s2 = st.sum_log_1mq(j);
        out.value += (a - 1.0) * s1 + (b - 1.0) * s2 +
                     n * (detail::log_gamma_pos(kappa) - detail::log_gamma_pos(a) -
                          detail::log_gamma_pos(b));
        const double psi_a = detail::digamma_pos(a);
        const double psi_b = detail::digamma_pos(b);
        const double diff = s1 - s2 - n * (psi_a - psi_b);
        const double dl_dmu = kappa * diff;
        out.grad(j) = dl_dmu * w;
        dl_dk += mu * s1 + (1.0 - mu) * s2 + n * (psi_k - mu * psi_a - (1.0 - mu) * psi_b);
        if (!second_order) continue;
        const double tri_a = detail::trigamma_pos(a);
        const double tri_b = detail::trigamma_pos(b);
        const double d2l_dmu2 = -kappa * kappa * n * (tri_a + tri_b);
        out.hess(j, j) = d2l_dmu2 * w * w + dl_dmu * w * (1.0 - 2.0 * mu);
        const double d2l_dmu_dk = diff + kappa * n * (-mu * tri_a + (1.0 - mu) * tri_b);
        out.hess(j, J) = out.hess(J, j) = kappa * w * d2l_dmu_dk;
        d2l_dk2 += n * (tri_k - mu * mu * tri_a - (1.0 - mu) * (1.0 - mu) * tri_b);
    }
    out.grad(J) = kappa * dl_dk;
    if (second_order) out.hess(J, J) = kappa * kappa * d2l_dk2 + kappa * dl_dk;
    return out;
}

}  // namespace

MleResult moment_intercept_only(const MortalityPanel& panel) {
    const Eigen::MatrixXd& q = panel.values();
    const int J = panel.age_count();
    MleResult out;
    out.beta.resize(J);
    double sum = 0.0;
    int used = 0;
    for (int j = 0; j < J; ++j) {
        const double m = q.col(j).mean();
        out.beta(j) = logit(m);
        const double v = (q.col(j).array() - m).square().sum() /
                         std::max<Eigen::Index>(1, q.rows() - 1);
        const double k = m * (1.0 - m) / v - 1.0;
        if (v > 0.0 && std::isfinite(k) && k > 0.0) {
            sum += std::log(k);
            ++used;
        }
    }
    out.log_kappa = used > 0 ? sum / used : std::log(10.0);
    return out;
}

MleResult mle_intercept_only(const MortalityPanel& panel, MleOptions options) {
    const int J = panel.age_count();
    const InterceptStats st = intercept_stats(panel);
    MleResult cur = moment_intercept_only(panel);
    cur.log_kappa = std::min(cur.log_kappa, options.max_log_kappa);

    for (int it = 0; it < options.max_iterations; ++it) {
        cur.iterations = it;
        const InterceptEval ev = intercept_eval(st, cur.beta, cur.log_kappa, true);
        Eigen::VectorXd g = ev.grad;
        Eigen::MatrixXd h = ev.hess;
        const bool at_cap = cur.kappa_capped && g(J) > 0.0;
        if (at_cap) {
            // Likelihood still increasing in kappa at the cap: optimise beta alone.
            g(J) = 0.0;
            h.row(J).setZero();
            h.col(J).setZero();
            h(J, J) = -1.0;
        }
        cur.gradient_norm = g.norm();
        if (cur.gradient_norm < options.gradient_tolerance) return cur;

        Eigen::VectorXd step;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(-h);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            step = ldlt.solve(g);
        } else {
            step = g / std::max(1.0, g.lpNorm<Eigen::Infinity>());
        }
        // Backtracking on the log likelihood.
        double scale = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 60; ++ls) {
            Eigen::VectorXd beta = cur.beta + scale * step.head(J);
            double lk = cur.log_kappa + scale * step(J);
            bool capped = cur.kappa_capped;
            if (lk >= options.max_log_kappa) {
                lk = options.max_log_kappa;
                capped = true;
            }
            const double val = intercept_eval(st, beta, lk, false).value;
            if (std::isfinite(val) && val >= ev.value - 1e-12 * std::abs(ev.value)) {
                cur.beta = beta;
                cur.log_kappa = lk;
                cur.kappa_capped = capped;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;
    }
    const InterceptEval ev = intercept_eval(st, cur.beta, cur.log_kappa, false);
    Eigen::VectorXd g = ev.grad;
    if (cur.kappa_capped && g(J) > 0.0) g(J) = 0.0;
    cur.gradient_norm = g.norm();
    if (cur.gradient_norm < options.gradient_tolerance) return cur;
    throw MleNonConvergence(
        fmt::format("intercept-only MLE did not converge (gradient norm {})", cur.gradient_norm),
        cur);
}

Initialization initialize(const ModelSpec& spec, const MortalityPanel& panel, Rng& rng) {
    if (spec.variant == Variant::bfa) return initialize(spec, panel, MleResult{}, false, rng);
    try {
        return initialize(spec, panel, mle_intercept_only(panel), false, rng);
    } catch (const ConvergenceError&) {
        return initialize(spec, panel, moment_intercept_only(panel), true, rng);
    }
}

Initialization initialize(const ModelSpec& spec, const MortalityPanel& panel,
                          const MleResult& intercepts, bool fallback, Rng& rng) {
    spec.check_against(panel);
    Initialization init{ParamVector(spec), fallback};
    auto& x = init.params.values;
    const auto& layout = init.params.layout;
    constexpr double sd = 0.1;
    for (int j = 0; j < layout.ages(); ++j)
        for (int k = 0; k < layout.K(); ++k) x(layout.alpha(j, k)) = rng.normal(0.0, sd);
    if (spec.variant == Variant::blv) {
        for (int j = 0; j < layout.ages(); ++j) x(layout.beta(j)) = rng.normal(intercepts.beta(j), sd);
        x(layout.log_kappa()) = rng.normal(intercepts.log_kappa, sd);
        for (int i = 0; i < layout.countries(); ++i) {
            x(layout.u_phi(i)) = std::atanh(rng.uniform(-0.1, 0.1));
            x(layout.log_sigma(i)) = rng.normal(0.0, sd);
        }
    } else {
        const Eigen::MatrixXd y = logit_transform(panel, true);
        for (int j = 0; j < layout.ages(); ++j) {
            const double var = y.col(j).squaredNorm() / std::max<Eigen::Index>(1, y.rows() - 1);
            x(layout.log_psi(j)) = std::log(std::max(var, 1e-8)) + rng.normal(0.0, sd);
        }
    }
    for (int r = 0; r < layout.rows(); ++r)
        for (int k = 0; k < layout.K(); ++k) x(layout.latent(r, k)) = rng.normal(0.0, sd);
    return init;
}

}  // namespace blv
