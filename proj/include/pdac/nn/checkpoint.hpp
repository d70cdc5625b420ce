#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "pdac/nn/network.hpp"

namespace pdac::nn {

struct CheckpointMeta {
  std::string kind;  // "generator", "discriminator", "classifier", ...
  nlohmann::json config = nlohmann::json::object();
  int epoch = 0;
  std::uint64_t seed = 0;
};

/// `<path>.json`, holding {kind, config, graph, epoch, seed, parameter_count}.
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

/// Writes parameters and batch-norm buffers to `path` (binary, values stored
/// as float64) plus the JSON sidecar. Throws WriteFailure.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, Network<T>& net, const CheckpointMeta& meta);

/// Rebuilds the network from the sidecar's graph and restores its state.
/// Throws BadCheckpoint on any inconsistency.
template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace pdac::nn
