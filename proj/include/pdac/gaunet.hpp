#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "pdac/nn/graph.hpp"
#include "pdac/nn/network.hpp"
#include "pdac/volume.hpp"

namespace pdac::gaunet {

enum class LatentMode { NoiseVolume };
enum class FinalActivation { Sigmoid };

/// 3D U-Net generator. Channels double per level starting at base_channels.
struct GeneratorConfig {
  std::size_t out_edge = 32;
  std::size_t depth = 3;
  std::size_t base_channels = 16;
  LatentMode latent_mode = LatentMode::NoiseVolume;
  FinalActivation final_activation = FinalActivation::Sigmoid;
  std::uint64_t init_seed = 42;
};

/// 3D CNN discriminator: three (conv -> max-pool -> batch-norm) blocks, then a
/// dense unit with sigmoid.
struct DiscriminatorConfig {
  std::size_t in_edge = 32;
  std::array<std::size_t, 3> block_channels{16, 32, 64};
  std::size_t kernel = 2;
  std::size_t conv_stride = 1;
  std::size_t pool = 2;
  std::uint64_t init_seed = 43;
};

/// Throws InvalidConfig.
void validate(const GeneratorConfig& cfg);
void validate(const DiscriminatorConfig& cfg);

nn::ModelGraph build_generator(const GeneratorConfig& cfg);
nn::ModelGraph build_discriminator(const DiscriminatorConfig& cfg);

/// Runs the generator in inference mode on a (N, 1, E, E, E) latent batch.
/// Throws ShapeMismatch when the latent does not match the graph input.
std::vector<Volume> generate(nn::Network<float>& generator, const nn::Tensor<float>& latent);

nlohmann::json to_json(const GeneratorConfig& cfg);
nlohmann::json to_json(const DiscriminatorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

}  // namespace pdac::gaunet
