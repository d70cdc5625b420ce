#include "pdac/gaunet.hpp"

#include "pdac/batch.hpp"
#include "pdac/error.hpp"

namespace pdac::gaunet {
namespace {

using nn::Dim3;
using nn::LayerKind;
using nn::LayerSpec;

LayerSpec conv(std::size_t channels, std::size_t k, std::size_t stride, std::size_t lo, std::size_t hi,
               std::string name) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.channels = channels;
  l.kernel = Dim3::cube(k);
  l.stride = Dim3::cube(stride);
  l.pad_lo = Dim3::cube(lo);
  l.pad_hi = Dim3::cube(hi);
  l.name = std::move(name);
  return l;
}

LayerSpec up(std::size_t channels, int skip_from, std::string name) {
  LayerSpec l = conv(channels, 3, 2, 1, 1, std::move(name));
  l.kind = LayerKind::ConvTranspose;
  l.out_pad = Dim3::cube(1);
  l.skip_from = skip_from;
  return l;
}

LayerSpec plain(LayerKind kind, std::string name = {}) {
  LayerSpec l;
  l.kind = kind;
  l.name = std::move(name);
  return l;
}

void invalid(const std::string& why) { throw Error(ErrorKind::InvalidConfig, why); }

}  // namespace

void validate(const GeneratorConfig& cfg) {
  if (cfg.depth < 2) invalid("generator depth must be at least 2");
  if (cfg.base_channels < 8) invalid("generator base_channels must be at least 8");
  const std::size_t factor = std::size_t{1} << cfg.depth;
  if (cfg.out_edge == 0 || cfg.out_edge % factor != 0) {
    invalid("generator out_edge " + std::to_string(cfg.out_edge) + " is not divisible by 2^depth = " +
            std::to_string(factor));
  }
}

void validate(const DiscriminatorConfig& cfg) {
  if (cfg.kernel == 0 || cfg.conv_stride == 0 || cfg.pool < 2) invalid("discriminator kernel/stride/pool invalid");
  for (auto c : cfg.block_channels)
    if (c == 0) invalid("discriminator block channels must be positive");
  const std::size_t factor = cfg.pool * cfg.pool * cfg.pool;
  if (cfg.in_edge == 0 || cfg.in_edge % factor != 0) {
    invalid("discriminator in_edge " + std::to_string(cfg.in_edge) + " is not divisible by " +
            std::to_string(factor) + " (three pools)");
  }
}

nn::ModelGraph build_generator(const GeneratorConfig& cfg) {
  validate(cfg);
  nn::ModelGraph g;
  g.name = "generator";
  g.input = {1, Dim3::cube(cfg.out_edge)};
  g.init_seed = cfg.init_seed;
  g.init = nn::InitScheme::Normal002;

  std::vector<int> level_out;  // index of each encoder level's activation
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::string tag = "enc" + std::to_string(i);
    g.layers.push_back(conv(cfg.base_channels << i, 3, 2, 1, 1, tag + ".conv"));
    g.layers.push_back(plain(LayerKind::BatchNorm, tag + ".bn"));
    g.layers.push_back(plain(LayerKind::ReLU, tag + ".relu"));
    level_out.push_back(static_cast<int>(g.layers.size()) - 1);
  }
  // The deepest level feeds the decoder directly; each later upsampling
  // joins the encoder activation at its input resolution.
  int skip = -1;
  for (std::size_t j = cfg.depth - 1; j >= 1; --j) {
    const std::string tag = "dec" + std::to_string(j);
    g.layers.push_back(up(cfg.base_channels << (j - 1), skip, tag + ".up"));
    g.layers.push_back(plain(LayerKind::BatchNorm, tag + ".bn"));
    g.layers.push_back(plain(LayerKind::ReLU, tag + ".relu"));
    skip = level_out[j - 1];
  }
  g.layers.push_back(up(1, skip, "out.up"));
  g.layers.push_back(plain(LayerKind::Sigmoid, "out.sigmoid"));
  g.infer_shapes();
  return g;
}

nn::ModelGraph build_discriminator(const DiscriminatorConfig& cfg) {
  validate(cfg);
  nn::ModelGraph g;
  g.name = "discriminator";
  g.input = {1, Dim3::cube(cfg.in_edge)};
  g.init_seed = cfg.init_seed;
  g.init = nn::InitScheme::Normal002;
  // "Same" padding for an even kernel puts the extra voxel on the high side.
  const std::size_t lo = (cfg.kernel - 1) / 2;
  const std::size_t hi = cfg.kernel - 1 - lo;
  for (std::size_t b = 0; b < 3; ++b) {
    const std::string tag = "block" + std::to_string(b);
    g.layers.push_back(conv(cfg.block_channels[b], cfg.kernel, cfg.conv_stride, lo, hi, tag + ".conv"));
    LayerSpec pool = plain(LayerKind::MaxPool, tag + ".pool");
    pool.kernel = Dim3::cube(cfg.pool);
    g.layers.push_back(pool);
    g.layers.push_back(plain(LayerKind::BatchNorm, tag + ".bn"));
  }
  g.layers.push_back(plain(LayerKind::Flatten, "flatten"));
  LayerSpec dense = plain(LayerKind::Dense, "dense");
  dense.channels = 1;
  g.layers.push_back(dense);
  g.layers.push_back(plain(LayerKind::Sigmoid, "sigmoid"));
  try {
    g.infer_shapes();
  } catch (const Error& e) {
    invalid(std::string("discriminator does not chain: ") + e.what());
  }
  return g;
}

std::vector<Volume> generate(nn::Network<float>& generator, const nn::Tensor<float>& latent) {
  const auto& y = generator.forward(latent, nn::Mode::Eval);
  return from_batch(y, IntensitySpace::Normalized);
}

nlohmann::json to_json(const GeneratorConfig& cfg) {
  return {{"out_edge", cfg.out_edge},
          {"depth", cfg.depth},
          {"base_channels", cfg.base_channels},
          {"latent_mode", "noise_volume"},
          {"final_activation", "sigmoid"},
          {"init_seed", cfg.init_seed}};
}

nlohmann::json to_json(const DiscriminatorConfig& cfg) {
  return {{"in_edge", cfg.in_edge},
          {"block_channels", cfg.block_channels},
          {"kernel", cfg.kernel},
          {"conv_stride", cfg.conv_stride},
          {"pool", cfg.pool},
          {"init_seed", cfg.init_seed}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.out_edge = j.value("out_edge", c.out_edge);
  c.depth = j.value("depth", c.depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.in_edge = j.value("in_edge", c.in_edge);
  c.block_channels = j.value("block_channels", c.block_channels);
  c.kernel = j.value("kernel", c.kernel);
  c.conv_stride = j.value("conv_stride", c.conv_stride);
  c.pool = j.value("pool", c.pool);
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

}  // namespace pdac::gaunet
