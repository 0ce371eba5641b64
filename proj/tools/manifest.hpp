#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace blv::cli {

[[nodiscard]] std::string sha256_hex(std::string_view bytes);
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

/// Record of one command run. Output paths are stored relative to the output
/// directory, each with its digest and size.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::vector<std::uint64_t> seeds;
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;
    double wall_clock_seconds = 0.0;

    [[nodiscard]] nlohmann::json to_json(const std::filesystem::path& out_dir) const;
    /// Writes manifest.json into `out_dir`.
    void write(const std::filesystem::path& out_dir) const;
};

}  // namespace blv::cli
