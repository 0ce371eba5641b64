#include "blv/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <memory>

namespace blv {

LogDensityGradient make_target(const ModelSpec& spec, const MortalityPanel& panel) {
    if (spec.variant == Variant::blv) {
        auto post = std::make_shared<const BlvPosterior>(spec, panel);
        return [post](std::span<const double> x, std::span<double> g) {
            return post->log_density_gradient(x, g);
        };
    }
    auto post = std::make_shared<const BfaPosterior>(spec, logit_transform(panel, true));
    return [post](std::span<const double> x, std::span<double> g) {
        return post->log_density_gradient(x, g);
    };
}

DerivedDraws derive_draws(const ModelSpec& spec, const MortalityPanel& panel,
                          const std::vector<Eigen::MatrixXd>& chains) {
    const ParamLayout layout(spec);
    const int J = layout.ages();
    const int K = layout.K();
    const int n = layout.countries();
    const int rows = layout.rows();
    DerivedDraws out;
    const auto& ages = panel.ages();
    if (spec.variant == Variant::blv) {
        out.names.emplace_back("kappa");
        for (int i = 0; i < n; ++i) out.names.push_back(fmt::format("phi[c={}]", panel.series(i).id));
        for (int i = 0; i < n; ++i) {
            out.names.push_back(fmt::format("sigma[c={}]", panel.series(i).id));
        }
        for (const auto& s : panel.series()) {
            for (int t = 0; t < s.length(); ++t) {
                for (int k = 0; k < K; ++k) {
                    out.names.push_back(
                        fmt::format("theta[c={},t={},k={}]", s.id, s.first_time + t, k + 1));
                }
            }
        }
    } else {
        for (int x = 0; x < J; ++x) {
            out.names.push_back(fmt::format("psi[x={}]", ages[x].lower_bound()));
        }
    }

    const auto width = static_cast<Eigen::Index>(out.names.size());
    for (const auto& chain : chains) {
        Eigen::MatrixXd d(chain.rows(), width);
        for (Eigen::Index s = 0; s < chain.rows(); ++s) {
            const Eigen::VectorXd x = chain.row(s).transpose();
            const std::span<const double> v(x.data(), static_cast<std::size_t>(x.size()));
            if (spec.variant == Variant::blv) {
                d(s, 0) = std::exp(v[layout.log_kappa()]);
                for (int i = 0; i < n; ++i) {
                    d(s, 1 + i) = std::tanh(v[layout.u_phi(i)]);
                    d(s, 1 + n + i) = std::exp(v[layout.log_sigma(i)]);
                }
                const Eigen::MatrixXd theta = latent_states(spec, v);
                for (int r = 0; r < rows; ++r) {
                    for (int k = 0; k < K; ++k) d(s, 1 + 2 * n + r * K + k) = theta(r, k);
                }
            } else {
                for (int x_ = 0; x_ < J; ++x_) d(s, x_) = std::exp(v[layout.log_psi(x_)]);
            }
        }
        out.chains.push_back(std::move(d));
    }
    return out;
}

Eigen::MatrixXd FitResult::pooled() const {
    Eigen::Index total = 0;
    for (const auto& c : chains) total += c.rows();
    Eigen::MatrixXd out(total, chains.empty() ? 0 : chains.front().cols());
    Eigen::Index at = 0;
    for (const auto& c : chains) {
        out.middleRows(at, c.rows()) = c;
        at += c.rows();
    }
    return out;
}

int FitResult::divergences() const {
    int total = 0;
    for (const auto& c : chain_info) total += c.divergences;
    return total;
}

namespace {

std::string group_of(const std::string& name) { return name.substr(0, name.find('[')); }

}  // namespace

void summarize_fit(const MortalityPanel& panel, FitResult& fit) {
    const DerivedDraws derived = derive_draws(fit.spec, panel, fit.chains);
    std::vector<Eigen::MatrixXd> all;
    for (std::size_t c = 0; c < fit.chains.size(); ++c) {
        Eigen::MatrixXd m(fit.chains[c].rows(), fit.chains[c].cols() + derived.chains[c].cols());
        m << fit.chains[c], derived.chains[c];
        all.push_back(std::move(m));
    }
    std::vector<std::string> names = fit.names;
    names.insert(names.end(), derived.names.begin(), derived.names.end());

    const Diagnostics diag = diagnose(all);
    Eigen::Index total = 0;
    for (const auto& m : all) total += m.rows();
    Eigen::VectorXd column(total);
    fit.summary.clear();
    fit.max_r_hat = 1.0;
    for (std::size_t d = 0; d < names.size(); ++d) {
        Eigen::Index at = 0;
        for (const auto& m : all) {
            column.segment(at, m.rows()) = m.col(static_cast<Eigen::Index>(d));
            at += m.rows();
        }
        SummaryRow row{names[d],
                       summarize({column.data(), static_cast<std::size_t>(column.size())},
                                 fit.options.level),
                       diag.r_hat[d], diag.ess[d]};
        if (row.r_hat) fit.max_r_hat = std::max(fit.max_r_hat, *row.r_hat);
        fit.summary.push_back(std::move(row));
    }

    const std::vector<std::string> groups =
        fit.spec.variant == Variant::blv
            ? std::vector<std::string>{"alpha", "beta", "log_kappa", "log_sigma", "phi", "theta"}
            : std::vector<std::string>{"alpha", "log_psi", "theta"};
    fit.groups.clear();
    for (const auto& g : groups) {
        std::vector<std::optional<double>> r, e;
        for (std::size_t d = 0; d < names.size(); ++d) {
            if (group_of(names[d]) == g) {
                r.push_back(diag.r_hat[d]);
                e.push_back(diag.ess[d]);
            }
        }
        fit.groups.push_back(summarize_group(g, r, e));
    }
}

FitResult fit_model(const MortalityPanel& panel, const FitOptions& options) {
    FitResult fit;
    fit.options = options;
    fit.spec = ModelSpec::for_panel(panel, options.K, options.variant, options.priors);
    const ParamLayout layout(fit.spec);
    fit.names = layout.names(panel);

    if (fit.spec.variant == Variant::blv) {
        try {
            fit.intercepts = mle_intercept_only(panel);
        } catch (const ConvergenceError&) {
            fit.intercepts = moment_intercept_only(panel);
            fit.used_moment_fallback = true;
        }
    }
    std::vector<Eigen::VectorXd> inits;
    for (int c = 0; c < options.sampler.chains; ++c) {
        Rng rng(options.sampler.seed, kTagInit, static_cast<std::uint64_t>(c));
        inits.push_back(
            initialize(fit.spec, panel, fit.intercepts, fit.used_moment_fallback, rng).params.values);
    }

    auto outputs = nuts_sample(make_target(fit.spec, panel), inits, options.sampler);
    for (auto& out : outputs) {
        fit.chains.push_back(std::move(out.draws));
        out.draws.resize(0, 0);
        fit.chain_info.push_back(std::move(out));
    }

    fit.reference = options.reference ? *options.reference : pca_reference(panel, options.K);
    align_all(layout, fit.reference, fit.chains);

    fit.varimax_rotation = Eigen::MatrixXd::Identity(options.K, options.K);
    if (options.varimax) {
        Eigen::MatrixXd mean_alpha = Eigen::MatrixXd::Zero(layout.ages(), layout.K());
        Eigen::Index count = 0;
        for (const auto& chain : fit.chains) {
            for (Eigen::Index s = 0; s < chain.rows(); ++s) {
                const Eigen::VectorXd x = chain.row(s).transpose();
                mean_alpha += draw_loadings(layout, {x.data(), static_cast<std::size_t>(x.size())});
                ++count;
            }
        }
        if (count > 0) mean_alpha /= static_cast<double>(count);
        fit.varimax_rotation = varimax(mean_alpha).rotation;
        rotate_all(layout, fit.varimax_rotation, fit.chains);
    }

    summarize_fit(panel, fit);
    return fit;
}

}  // namespace blv
