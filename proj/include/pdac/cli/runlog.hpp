#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pdac/cli/config.hpp"

namespace pdac::cli {

/// Hex SHA-1 of "blob <size>\0<bytes>", the hash git assigns to file content.
std::string git_blob_sha1(const std::filesystem::path& file);

/// Regular files under each input (directories are walked recursively),
/// sorted and deduplicated.
std::vector<std::filesystem::path> expand_inputs(const std::vector<std::filesystem::path>& inputs);

/// Writes `config.yaml` (the effective config) and `run_manifest.json`
/// (subcommand, seed, config text, input hashes, re-run command) into `dir`.
void write_run_manifest(const std::filesystem::path& dir, const std::string& subcommand,
                        const PipelineConfig& cfg, const std::vector<std::filesystem::path>& inputs);

}  // namespace pdac::cli
