#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "blv/data.hpp"
#include "blv/model.hpp"
#include "blv/pipeline.hpp"

namespace blv {

[[nodiscard]] nlohmann::json priors_to_json(const PriorScales& priors);
/// Keys absent from `j` keep their value in `defaults`.
[[nodiscard]] PriorScales priors_from_json(const nlohmann::json& j, PriorScales defaults = {});

/// Binary chain file: magic "BLVDRAW1", u64 rows, u64 cols, then rows*cols
/// little-endian doubles in row-major order.
void write_chain(const std::filesystem::path& path, const Eigen::MatrixXd& draws);
/// Throws ParseError on a bad magic or truncated file.
[[nodiscard]] Eigen::MatrixXd read_chain(const std::filesystem::path& path);

/// Everything in draws.json except the draws themselves.
[[nodiscard]] nlohmann::json archive_header(const FitResult& fit, const MortalityPanel& panel);

/// Writes draws.json and chain_<c>.bin into `dir`; returns the files written.
std::vector<std::filesystem::path> write_archive(const std::filesystem::path& dir,
                                                 const FitResult& fit,
                                                 const MortalityPanel& panel);

/// Rebuilds a fit from an archive and recomputes its summaries. Throws
/// StructuralError if the panel does not match the archive's shape or names.
[[nodiscard]] FitResult read_archive(const std::filesystem::path& dir, const MortalityPanel& panel);

/// Wide CSV: chain,draw,<parameter names>.
[[nodiscard]] std::string draws_csv(const std::vector<std::string>& names,
                                    const std::vector<Eigen::MatrixXd>& chains);

/// Single parameter state as JSON: {"layout": ..., "names": [...], "values": [...]}.
[[nodiscard]] nlohmann::json param_vector_json(const ParamVector& params,
                                               const MortalityPanel& panel);
/// Throws StructuralError when the layout does not match `spec`.
[[nodiscard]] ParamVector param_vector_from_json(const nlohmann::json& j, const ModelSpec& spec);

}  // namespace blv
