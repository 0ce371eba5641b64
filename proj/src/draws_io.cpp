#include "blv/draws_io.hpp"

#include <fmt/format.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "blv/error.hpp"

namespace blv {

namespace {

constexpr char kMagic[8] = {'B', 'L', 'V', 'D', 'R', 'A', 'W', '1'};

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vector(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
    return rows;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j, Eigen::Index cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Eigen::VectorXd row = json_vector(j[r]);
        if (row.size() != cols) throw StructuralError("draws.json: ragged matrix");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

nlohmann::json shape_json(const MortalityPanel& panel) {
    nlohmann::json countries = nlohmann::json::array();
    for (const auto& s : panel.series()) {
        countries.push_back({{"id", s.id}, {"first_time", s.first_time}, {"last_time", s.last_time}});
    }
    std::vector<int> ages;
    for (const auto& a : panel.ages()) ages.push_back(a.lower_bound());
    return {{"countries", countries}, {"ages", ages}};
}

}  // namespace

nlohmann::json priors_to_json(const PriorScales& p) {
    return {{"alpha_variance", p.alpha_variance},
            {"beta_variance", p.beta_variance},
            {"log_kappa_variance", p.log_kappa_variance},
            {"log_sigma_variance", p.log_sigma_variance},
            {"log_psi_variance", p.log_psi_variance}};
}

PriorScales priors_from_json(const nlohmann::json& j, PriorScales p) {
    p.alpha_variance = j.value("alpha_variance", p.alpha_variance);
    p.beta_variance = j.value("beta_variance", p.beta_variance);
    p.log_kappa_variance = j.value("log_kappa_variance", p.log_kappa_variance);
    p.log_sigma_variance = j.value("log_sigma_variance", p.log_sigma_variance);
    p.log_psi_variance = j.value("log_psi_variance", p.log_psi_variance);
    for (double v : {p.alpha_variance, p.beta_variance, p.log_kappa_variance, p.log_sigma_variance,
                     p.log_psi_variance}) {
        if (!(v > 0.0)) throw DomainError("prior variances must be > 0");
    }
    return p;
}

void write_chain(const std::filesystem::path& path, const Eigen::MatrixXd& draws) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    const auto rows = static_cast<std::uint64_t>(draws.rows());
    const auto cols = static_cast<std::uint64_t>(draws.cols());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = draws;
    out.write(reinterpret_cast<const char*>(rm.data()),
              static_cast<std::streamsize>(rm.size() * sizeof(double)));
    if (!out) throw Error("write failed: " + path.string());
}

Eigen::MatrixXd read_chain(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[8];
    std::uint64_t rows = 0, cols = 0;
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ParseError(1, path.string() + ": not a chain file");
    }
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in || rows > (1ULL << 32) || cols > (1ULL << 32)) {
        throw ParseError(1, path.string() + ": bad header");
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
        static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(rm.data()),
            static_cast<std::streamsize>(rm.size() * sizeof(double)));
    if (!in) throw ParseError(1, path.string() + ": truncated");
    return rm;
}

nlohmann::json archive_header(const FitResult& fit, const MortalityPanel& panel) {
    nlohmann::json j;
    j["format"] = "blv-draws-1";
    j["variant"] = to_string(fit.spec.variant);
    j["K"] = fit.spec.K;
    j["priors"] = priors_to_json(fit.spec.priors);
    j["shape"] = shape_json(panel);
    j["layout"] = ParamLayout(fit.spec).to_json();
    j["names"] = fit.names;
    j["sampler"] = fit.options.sampler.to_json();
    j["varimax"] = fit.options.varimax;
    j["level"] = fit.options.level;
    j["reference"] = matrix_json(fit.reference);
    j["varimax_rotation"] = matrix_json(fit.varimax_rotation);
    j["intercepts"] = {{"beta", vector_json(fit.intercepts.beta)},
                       {"log_kappa", fit.intercepts.log_kappa},
                       {"moment_fallback", fit.used_moment_fallback}};
    nlohmann::json chains = nlohmann::json::array();
    for (std::size_t c = 0; c < fit.chain_info.size(); ++c) {
        const auto& info = fit.chain_info[c];
        chains.push_back({{"file", fmt::format("chain_{}.bin", c)},
                          {"draws", fit.chains[c].rows()},
                          {"step_size", info.step_size},
                          {"inv_metric", vector_json(info.inv_metric)},
                          {"divergences", info.divergences},
                          {"post_warmup_iterations", info.post_warmup_iterations},
                          {"divergence_warning", info.divergence_warning},
                          {"log_density", vector_json(info.log_density)},
                          {"accept_stat", vector_json(info.accept_stat)},
                          {"tree_depth", info.tree_depth}});
    }
    j["chains"] = chains;
    return j;
}

std::vector<std::filesystem::path> write_archive(const std::filesystem::path& dir,
                                                 const FitResult& fit,
                                                 const MortalityPanel& panel) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    for (std::size_t c = 0; c < fit.chains.size(); ++c) {
        const auto path = dir / fmt::format("chain_{}.bin", c);
        write_chain(path, fit.chains[c]);
        files.push_back(path);
    }
    const auto path = dir / "draws.json";
    std::ofstream out(path);
    out << archive_header(fit, panel).dump(1) << '\n';
    if (!out) throw Error("write failed: " + path.string());
    files.push_back(path);
    return files;
}

FitResult read_archive(const std::filesystem::path& dir, const MortalityPanel& panel) {
    std::ifstream in(dir / "draws.json");
    if (!in) throw Error("cannot open " + (dir / "draws.json").string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(1, "draws.json: " + std::string(e.what()));
    }
    if (j.value("format", "") != "blv-draws-1") throw ParseError(1, "draws.json: unknown format");
    if (j["shape"] != shape_json(panel)) {
        throw StructuralError("panel does not match the archive's countries, periods or ages");
    }

    FitResult fit;
    fit.options.K = j.at("K").get<int>();
    fit.options.variant = parse_variant(j.at("variant").get<std::string>());
    fit.options.priors = priors_from_json(j.at("priors"));
    fit.options.sampler = SamplerConfig::from_json(j.at("sampler"));
    fit.options.varimax = j.value("varimax", false);
    fit.options.level = j.value("level", 0.95);
    fit.spec = ModelSpec::for_panel(panel, fit.options.K, fit.options.variant, fit.options.priors);
    const ParamLayout layout(fit.spec);
    fit.names = layout.names(panel);
    if (j.at("names").get<std::vector<std::string>>() != fit.names) {
        throw StructuralError("archive parameter names do not match the panel");
    }
    fit.reference = json_matrix(j.at("reference"), fit.options.K);
    fit.options.reference = fit.reference;
    fit.varimax_rotation = json_matrix(j.at("varimax_rotation"), fit.options.K);
    fit.intercepts.beta = json_vector(j.at("intercepts").at("beta"));
    fit.intercepts.log_kappa = j.at("intercepts").at("log_kappa").get<double>();
    fit.used_moment_fallback = j.at("intercepts").at("moment_fallback").get<bool>();

    for (const auto& c : j.at("chains")) {
        Eigen::MatrixXd draws = read_chain(dir / c.at("file").get<std::string>());
        if (draws.cols() != layout.size()) {
            throw StructuralError("chain file width does not match the parameter layout");
        }
        ChainOutput info;
        info.step_size = c.at("step_size").get<double>();
        info.inv_metric = json_vector(c.at("inv_metric"));
        info.divergences = c.at("divergences").get<int>();
        info.post_warmup_iterations = c.at("post_warmup_iterations").get<int>();
        info.divergence_warning = c.at("divergence_warning").get<bool>();
        info.log_density = json_vector(c.at("log_density"));
        info.accept_stat = json_vector(c.at("accept_stat"));
        info.tree_depth = c.at("tree_depth").get<std::vector<int>>();
        fit.chains.push_back(std::move(draws));
        fit.chain_info.push_back(std::move(info));
    }
    summarize_fit(panel, fit);
    return fit;
}

std::string draws_csv(const std::vector<std::string>& names,
                      const std::vector<Eigen::MatrixXd>& chains) {
    std::ostringstream out;
    out << "chain,draw";
    for (const auto& n : names) out << ",\"" << n << '"';
    out << '\n';
    for (std::size_t c = 0; c < chains.size(); ++c) {
        for (Eigen::Index s = 0; s < chains[c].rows(); ++s) {
            out << c << ',' << s;
            for (Eigen::Index d = 0; d < chains[c].cols(); ++d) out << fmt::format(",{}", chains[c](s, d));
            out << '\n';
        }
    }
    return out.str();
}

nlohmann::json param_vector_json(const ParamVector& params, const MortalityPanel& panel) {
    return {{"layout", params.layout.to_json()},
            {"names", params.layout.names(panel)},
            {"values", vector_json(params.values)}};
}

ParamVector param_vector_from_json(const nlohmann::json& j, const ModelSpec& spec) {
    ParamVector out(spec);
    if (j.at("layout") != out.layout.to_json()) {
        throw StructuralError("parameter vector layout does not match the model");
    }
    out.values = json_vector(j.at("values"));
    if (out.values.size() != out.layout.size()) {
        throw StructuralError("parameter vector has the wrong length");
    }
    return out;
}

}  // namespace blv
