#include "blv/sampler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

#include "blv/error.hpp"

namespace blv {

void SamplerConfig::validate() const {
    if (chains < 1) throw std::invalid_argument("sampler: chains must be >= 1");
    if (thin < 1) throw std::invalid_argument("sampler: thin must be >= 1");
    if (warmup < 0 || warmup >= iterations) {
        throw std::invalid_argument("sampler: warmup must be >= 0 and < iterations");
    }
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
        throw std::invalid_argument("sampler: target_accept must lie in (0,1)");
    }
    if (max_tree_depth < 1) throw std::invalid_argument("sampler: max_tree_depth must be >= 1");
}

nlohmann::json SamplerConfig::to_json() const {
    return {{"chains", chains},         {"iterations", iterations},
            {"warmup", warmup},         {"thin", thin},
            {"seed", seed},             {"target_accept", target_accept},
            {"max_tree_depth", max_tree_depth}, {"max_energy_error", max_energy_error}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j, SamplerConfig c) {
    c.chains = j.value("chains", c.chains);
    c.iterations = j.value("iterations", c.iterations);
    c.warmup = j.value("warmup", c.warmup);
    c.thin = j.value("thin", c.thin);
    c.seed = j.value("seed", c.seed);
    c.target_accept = j.value("target_accept", c.target_accept);
    c.max_tree_depth = j.value("max_tree_depth", c.max_tree_depth);
    c.max_energy_error = j.value("max_energy_error", c.max_energy_error);
    return c;
}

void refresh(const LogDensityGradient& target, PhasePoint& z) {
    z.grad.resize(z.q.size());
    z.log_density = target({z.q.data(), static_cast<std::size_t>(z.q.size())},
                           {z.grad.data(), static_cast<std::size_t>(z.grad.size())});
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
    return -z.log_density + 0.5 * z.p.dot(inv_metric.cwiseProduct(z.p));
}

void leapfrog(const LogDensityGradient& target, const Eigen::VectorXd& inv_metric, double step,
              PhasePoint& z) {
    z.p += 0.5 * step * z.grad;
    z.q += step * inv_metric.cwiseProduct(z.p);
    refresh(target, z);
    z.p += 0.5 * step * z.grad;
}

namespace {

double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Dual averaging of log step size toward a target acceptance statistic.
class StepSizeAdaptation {
public:
    explicit StepSizeAdaptation(double delta) : delta_(delta) {}
    void set_mu(double mu) { mu_ = mu; }
    void restart() {
        counter_ = 0;
        s_bar_ = 0.0;
        x_bar_ = 0.0;
    }
    void learn(double& epsilon, double adapt_stat) {
        ++counter_;
        adapt_stat = std::min(1.0, adapt_stat);
        const double eta = 1.0 / (counter_ + t0_);
        s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - adapt_stat);
        const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
        const double x_eta = std::pow(counter_, -kappa_);
        x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
        epsilon = std::exp(x);
    }
    void complete(double& epsilon) const { epsilon = std::exp(x_bar_); }

private:
    double counter_ = 0.0;
    double s_bar_ = 0.0;
    double x_bar_ = 0.0;
    double mu_ = 0.5;
    double delta_;
    static constexpr double gamma_ = 0.05;
    static constexpr double kappa_ = 0.75;
    static constexpr double t0_ = 10.0;
};

/// Fast/slow/fast warmup windows for the diagonal metric.
class MetricAdaptation {
public:
    MetricAdaptation(int num_warmup, int dim) : num_warmup_(num_warmup), dim_(dim) {
        int init_buffer = 75, term_buffer = 50, base_window = 25;
        if (num_warmup < 20) {
            enabled_ = false;
        } else if (init_buffer + base_window + term_buffer > num_warmup) {
            init_buffer = static_cast<int>(0.15 * num_warmup);
            term_buffer = static_cast<int>(0.1 * num_warmup);
            base_window = num_warmup - (init_buffer + term_buffer);
        }
        init_buffer_ = init_buffer;
        term_buffer_ = term_buffer;
        window_size_ = base_window;
        next_window_ = init_buffer_ + window_size_ - 1;
        reset_estimator();
    }

    /// Feeds one warmup position; returns true when `inv_metric` was updated.
    bool learn(Eigen::VectorXd& inv_metric, const Eigen::VectorXd& q) {
        if (!enabled_) {
            ++counter_;
            return false;
        }
        if (in_window()) add_sample(q);
        if (end_of_window()) {
            compute_next_window();
            const double n = static_cast<double>(count_);
            Eigen::VectorXd var = m2_ / (n - 1.0);
            inv_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
            reset_estimator();
            ++counter_;
            return true;
        }
        ++counter_;
        return false;
    }

private:
    bool in_window() const {
        return counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ &&
               counter_ != num_warmup_;
    }
    bool end_of_window() const { return counter_ == next_window_ && counter_ != num_warmup_; }
    void compute_next_window() {
        if (next_window_ == num_warmup_ - term_buffer_ - 1) return;
        window_size_ *= 2;
        next_window_ = counter_ + window_size_;
        if (next_window_ != num_warmup_ - term_buffer_ - 1) {
            const int boundary = next_window_ + 2 * window_size_;
            if (boundary >= num_warmup_ - term_buffer_) next_window_ = num_warmup_ - term_buffer_ - 1;
        }
    }
    void reset_estimator() {
        count_ = 0;
        mean_ = Eigen::VectorXd::Zero(dim_);
        m2_ = Eigen::VectorXd::Zero(dim_);
    }
    void add_sample(const Eigen::VectorXd& q) {
        ++count_;
        const Eigen::VectorXd delta = q - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_ += delta.cwiseProduct(q - mean_);
    }

    bool enabled_ = true;
    int num_warmup_;
    int dim_;
    int init_buffer_ = 0, term_buffer_ = 0, window_size_ = 0, next_window_ = 0;
    int counter_ = 0;
    int count_ = 0;
    Eigen::VectorXd mean_, m2_;
};

struct Transition {
    double accept_stat = 0.0;
    int depth = 0;
    int leapfrogs = 0;
    bool divergent = false;
};

class NutsChain {
public:
    NutsChain(const LogDensityGradient& target, const SamplerConfig& config, int chain_index,
              const Eigen::VectorXd& init)
        : target_(target),
          config_(config),
          rng_(config.seed, kTagChain, static_cast<std::uint64_t>(chain_index)) {
        z_.q = init;
        z_.p = Eigen::VectorXd::Zero(init.size());
        refresh(target_, z_);
        if (!std::isfinite(z_.log_density) || !z_.grad.allFinite()) {
            throw InitError(fmt::format(
                "chain {}: log density or gradient is not finite at the initial point",
                chain_index));
        }
        inv_metric_ = Eigen::VectorXd::Ones(init.size());
    }

    ChainOutput run() {
        const int dim = static_cast<int>(z_.q.size());
        const int kept = config_.draws_per_chain();
        ChainOutput out;
        out.draws.resize(kept, dim);
        out.log_density.resize(kept);
        out.accept_stat.resize(kept);
        out.tree_depth.reserve(kept);
        out.leapfrog_steps.reserve(kept);

        StepSizeAdaptation step_adapt(config_.target_accept);
        MetricAdaptation metric_adapt(config_.warmup, dim);
        init_step_size();
        step_adapt.set_mu(std::log(10.0 * epsilon_));
        step_adapt.restart();

        int row = 0;
        for (int it = 0; it < config_.iterations; ++it) {
            const bool warmup = it < config_.warmup;
            const Transition tr = transition();
            if (warmup) {
                step_adapt.learn(epsilon_, tr.accept_stat);
                if (metric_adapt.learn(inv_metric_, z_.q)) {
                    init_step_size();
                    step_adapt.set_mu(std::log(10.0 * epsilon_));
                    step_adapt.restart();
                }
                if (it + 1 == config_.warmup) step_adapt.complete(epsilon_);
                continue;
            }
            ++out.post_warmup_iterations;
            if (tr.divergent) ++out.divergences;
            if ((it - config_.warmup + 1) % config_.thin == 0 && row < kept) {
                out.draws.row(row) = z_.q.transpose();
                out.log_density(row) = z_.log_density;
                out.accept_stat(row) = tr.accept_stat;
                out.tree_depth.push_back(tr.depth);
                out.leapfrog_steps.push_back(tr.leapfrogs);
                ++row;
            }
        }
        out.step_size = epsilon_;
        out.inv_metric = inv_metric_;
        out.divergence_warning =
            out.post_warmup_iterations > 0 && out.divergences * 10 > out.post_warmup_iterations;
        return out;
    }

private:
    void sample_momentum(PhasePoint& z) {
        for (Eigen::Index i = 0; i < z.p.size(); ++i) {
            z.p(i) = rng_.normal() / std::sqrt(inv_metric_(i));
        }
    }

    Eigen::VectorXd p_sharp(const PhasePoint& z) const { return inv_metric_.cwiseProduct(z.p); }

    double energy(const PhasePoint& z) const {
        const double h = hamiltonian(z, inv_metric_);
        return std::isnan(h) ? std::numeric_limits<double>::infinity() : h;
    }

    void init_step_size() {
        const PhasePoint z_init = z_;
        PhasePoint z = z_init;
        sample_momentum(z);
        double h0 = energy(z);
        leapfrog(target_, inv_metric_, epsilon_, z);
        double delta_h = h0 - energy(z);
        const double log08 = std::log(0.8);
        const int direction = delta_h > log08 ? 1 : -1;
        while (true) {
            z = z_init;
            sample_momentum(z);
            h0 = energy(z);
            leapfrog(target_, inv_metric_, epsilon_, z);
            delta_h = h0 - energy(z);
            if (direction == 1 && !(delta_h > log08)) break;
            if (direction == -1 && !(delta_h < log08)) break;
            epsilon_ = direction == 1 ? 2.0 * epsilon_ : 0.5 * epsilon_;
            if (epsilon_ > 1e7) throw Error("step size search diverged: posterior may be improper");
            if (epsilon_ == 0.0) throw Error("no acceptably small step size found");
        }
    }

    static bool no_u_turn(const Eigen::VectorXd& p_sharp_minus,
                          const Eigen::VectorXd& p_sharp_plus, const Eigen::VectorXd& rho) {
        return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
    }

    Transition transition() {
        sample_momentum(z_);
        const double h0 = energy(z_);

        PhasePoint z_fwd = z_;
        PhasePoint z_bck = z_;
        PhasePoint z_sample = z_;
        PhasePoint z_propose = z_;

        Eigen::VectorXd p_fwd_fwd = z_.p, p_fwd_bck = z_.p;
        Eigen::VectorXd p_bck_fwd = z_.p, p_bck_bck = z_.p;
        Eigen::VectorXd ps_fwd_fwd = p_sharp(z_), ps_fwd_bck = ps_fwd_fwd;
        Eigen::VectorXd ps_bck_fwd = ps_fwd_fwd, ps_bck_bck = ps_fwd_fwd;
        Eigen::VectorXd rho = z_.p;

        double log_sum_weight = 0.0;
        Transition tr;
        double sum_metro_prob = 0.0;
        divergent_ = false;
        const auto dim = z_.q.size();

        while (tr.depth < config_.max_tree_depth) {
            Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim);
            Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(dim);
            bool valid_subtree = false;
            double log_sum_weight_subtree = -std::numeric_limits<double>::infinity();

            if (rng_.uniform() > 0.5) {
                z_ = z_fwd;
                rho_bck = rho;
                p_bck_fwd = p_fwd_bck;
                ps_bck_fwd = ps_fwd_bck;
                valid_subtree = build_tree(tr.depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd,
                                           p_fwd_bck, p_fwd_fwd, h0, 1.0, tr.leapfrogs,
                                           log_sum_weight_subtree, sum_metro_prob);
                z_fwd = z_;
            } else {
                z_ = z_bck;
                rho_fwd = rho;
                p_fwd_bck = p_bck_fwd;
                ps_fwd_bck = ps_bck_fwd;
                valid_subtree = build_tree(tr.depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck,
                                           p_bck_fwd, p_bck_bck, h0, -1.0, tr.leapfrogs,
                                           log_sum_weight_subtree, sum_metro_prob);
                z_bck = z_;
            }
            if (!valid_subtree) break;
            ++tr.depth;

            if (log_sum_weight_subtree > log_sum_weight) {
                z_sample = z_propose;
            } else if (rng_.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
                z_sample = z_propose;
            }
            log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

            rho = rho_bck + rho_fwd;
            bool persist = no_u_turn(ps_bck_bck, ps_fwd_fwd, rho);
            Eigen::VectorXd rho_extended = rho_bck + p_fwd_bck;
            persist = persist && no_u_turn(ps_bck_bck, ps_fwd_bck, rho_extended);
            rho_extended = rho_fwd + p_bck_fwd;
            persist = persist && no_u_turn(ps_bck_fwd, ps_fwd_fwd, rho_extended);
            if (!persist) break;
        }

        tr.divergent = divergent_;
        tr.accept_stat = tr.leapfrogs > 0 ? sum_metro_prob / tr.leapfrogs : 0.0;
        z_ = z_sample;
        return tr;
    }

    bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& ps_beg,
                    Eigen::VectorXd& ps_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                    Eigen::VectorXd& p_end, double h0, double sign, int& n_leapfrog,
                    double& log_sum_weight, double& sum_metro_prob) {
        if (depth == 0) {
            leapfrog(target_, inv_metric_, sign * epsilon_, z_);
            ++n_leapfrog;
            const double h = energy(z_);
            if (!std::isfinite(z_.log_density) || h - h0 > config_.max_energy_error) {
                divergent_ = true;
            }
            log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
            sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
            z_propose = z_;
            ps_beg = p_sharp(z_);
            ps_end = ps_beg;
            rho += z_.p;
            p_beg = z_.p;
            p_end = p_beg;
            return !divergent_;
        }

        const auto dim = z_.q.size();
        double log_sum_weight_init = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd p_init_end(dim), ps_init_end(dim);
        Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim);
        const bool valid_init =
            build_tree(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, h0,
                       sign, n_leapfrog, log_sum_weight_init, sum_metro_prob);
        if (!valid_init) return false;

        PhasePoint z_propose_final = z_;
        double log_sum_weight_final = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd p_final_beg(dim), ps_final_beg(dim);
        Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim);
        const bool valid_final =
            build_tree(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg,
                       p_end, h0, sign, n_leapfrog, log_sum_weight_final, sum_metro_prob);
        if (!valid_final) return false;

        const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
        log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
        if (log_sum_weight_final > log_sum_weight_subtree) {
            z_propose = z_propose_final;
        } else if (rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
            z_propose = z_propose_final;
        }

        const Eigen::VectorXd rho_subtree = rho_init + rho_final;
        rho += rho_subtree;
        bool persist = no_u_turn(ps_beg, ps_end, rho_subtree);
        Eigen::VectorXd rho_extended = rho_init + p_final_beg;
        persist = persist && no_u_turn(ps_beg, ps_final_beg, rho_extended);
        rho_extended = rho_final + p_init_end;
        persist = persist && no_u_turn(ps_init_end, ps_end, rho_extended);
        return persist;
    }

    const LogDensityGradient& target_;
    const SamplerConfig& config_;
    Rng rng_;
    PhasePoint z_;
    Eigen::VectorXd inv_metric_;
    double epsilon_ = 1.0;
    bool divergent_ = false;
};

}  // namespace

ChainOutput run_chain(const LogDensityGradient& target, const Eigen::VectorXd& init,
                      const SamplerConfig& config, int chain_index) {
    config.validate();
    NutsChain chain(target, config, chain_index, init);
    return chain.run();
}

std::vector<ChainOutput> nuts_sample(const LogDensityGradient& target,
                                     const std::vector<Eigen::VectorXd>& inits,
                                     const SamplerConfig& config) {
    config.validate();
    if (static_cast<int>(inits.size()) != config.chains) {
        throw std::invalid_argument(
            fmt::format("nuts_sample: {} initial points for {} chains", inits.size(), config.chains));
    }
    // Reject bad starts before any chain runs.
    for (int c = 0; c < config.chains; ++c) {
        PhasePoint z;
        z.q = inits[c];
        refresh(target, z);
        if (!std::isfinite(z.log_density) || !z.grad.allFinite()) {
            throw InitError(
                fmt::format("chain {}: log density or gradient is not finite at the initial point", c));
        }
    }

    std::vector<ChainOutput> out(config.chains);
    std::vector<std::exception_ptr> errors(config.chains);
    int workers = config.threads > 0 ? config.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, config.chains);

    auto run_one = [&](int c) {
        try {
            out[c] = run_chain(target, inits[c], config, c);
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (workers == 1) {
        for (int c = 0; c < config.chains; ++c) run_one(c);
    } else {
        for (int start = 0; start < config.chains; start += workers) {
            std::vector<std::thread> pool;
            for (int c = start; c < std::min(config.chains, start + workers); ++c) {
                pool.emplace_back(run_one, c);
            }
            for (auto& t : pool) t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace blv
