#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>

#include "pdac/cli/config.hpp"

namespace pdac::cli {

inline constexpr std::array<std::string_view, 8> kSubcommands = {
    "preprocess", "train-gan", "synth", "blend", "evaluate", "train-classifier", "eval-classifier", "report"};

bool is_subcommand(std::string_view name) noexcept;

/// `<io.output_dir>/<stage>`.
std::filesystem::path stage_dir(const PipelineConfig& cfg, std::string_view stage);

/// Runs one stage and writes its run manifest. Missing inputs raise
/// ConfigInvalid; module failures propagate as their own error kinds.
void run_subcommand(std::string_view name, const PipelineConfig& cfg);

}  // namespace pdac::cli
