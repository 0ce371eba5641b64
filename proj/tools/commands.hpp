#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blv/model.hpp"
#include "blv/sampler.hpp"
#include "manifest.hpp"

namespace blv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitConvergence = 3;
inline constexpr int kExitInternal = 4;

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Values given on the command line; unset ones fall back to the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> config;
    std::optional<std::string> out_dir;
    std::optional<int> chains, iterations, warmup, thin, max_tree_depth;
    std::optional<double> target_accept;
    std::optional<int> K, k_min, k_max, is_samples, replicate, replicates;
    std::optional<std::string> variant;
    std::vector<int> k_grid;
    bool varimax = false;
    bool draws_csv = false;
};

/// Effective settings after CLI > file > defaults.
struct RunConfig {
    std::uint64_t seed = 1;
    /// Seed given explicitly; it then replaces a scenario's own seed.
    bool seed_set = false;
    int threads = 0;
    std::filesystem::path out_dir = "out";
    SamplerConfig sampler;
    PriorScales priors;
    int K = 1;
    Variant variant = Variant::blv;
    bool varimax = false;
    double level = 0.95;
    int k_min = 1;
    int k_max = 3;
    int is_samples = 100000;
    std::optional<int> replicate;
    std::optional<int> replicates;
    std::vector<int> k_grid;
    bool draws_csv = false;
    std::optional<std::filesystem::path> config_file;

    [[nodiscard]] nlohmann::json to_json() const;
};

[[nodiscard]] RunConfig resolve(const Overrides& o);

/// Output directory, manifest and file bookkeeping of one command.
struct Run {
    RunConfig config;
    RunManifest manifest;

    Run(RunConfig c, std::string command);
    /// Writes `text` to out_dir/name and records it.
    void write(const std::string& name, const std::string& text);
    void record(const std::filesystem::path& path) { manifest.outputs.push_back(path); }
    void input(const std::filesystem::path& path);
};

int cmd_explore(Run& run, const std::string& panel);
int cmd_fit(Run& run, const std::string& panel);
int cmd_select(Run& run, const std::string& panel);
int cmd_simulate(Run& run, const std::string& scenario);
int cmd_sim_study(Run& run, const std::string& scenario);
int cmd_evaluate(Run& run, const std::string& archive, const std::string& panel);
int cmd_report(Run& run, const std::string& archive, const std::string& panel);

}  // namespace blv::cli
