#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pdac/nn/tensor.hpp"

namespace pdac::nn {

enum class LayerKind {
  Conv,           // 3D convolution with bias
  ConvTranspose,  // adjoint of Conv; upsamples by `stride`
  MaxPool,        // non-overlapping, window == kernel
  BatchNorm,      // per-channel, learnable affine
  ReLU,
  Sigmoid,
  Flatten,
  Dense,  // fully connected with bias; flattens its input implicitly
  Dropout,
  GlobalAvgPool,
};

std::string_view to_string(LayerKind kind) noexcept;

/// One node of a sequential graph. A layer consumes the previous layer's
/// output; when `skip_from` names an earlier layer, that layer's output is
/// concatenated (channel axis, after the previous output) first.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t channels = 0;  // Conv/ConvTranspose output channels, Dense units
  Dim3 kernel{1, 1, 1};
  Dim3 stride{1, 1, 1};
  Dim3 pad_lo{0, 0, 0};
  Dim3 pad_hi{0, 0, 0};
  Dim3 out_pad{0, 0, 0};  // ConvTranspose only
  double rate = 0.0;      // Dropout probability
  int skip_from = -1;
  std::string name;
};

/// Per-sample activation shape.
struct TensorShape {
  std::size_t c = 0;
  Dim3 s{};

  std::size_t count() const noexcept { return c * s.volume(); }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

std::string to_string(const TensorShape& s);

enum class InitScheme {
  Normal002,  // N(0, 0.02) weights
  HeNormal,   // N(0, sqrt(2 / fan_in)) weights
};

/// Declarative description of a sequential network with skip links.
struct ModelGraph {
  std::string name;
  TensorShape input;
  std::vector<LayerSpec> layers;
  std::uint64_t init_seed = 0;
  InitScheme init = InitScheme::Normal002;

  /// Output shape of every layer. Throws ShapeMismatch when the chain is
  /// inconsistent or a skip link joins different spatial extents.
  std::vector<TensorShape> infer_shapes() const;
  TensorShape output_shape() const;
  /// Input shape of layer `i` (after any skip concatenation).
  TensorShape input_shape_of(std::size_t i, const std::vector<TensorShape>& shapes) const;
};

/// Exact number of learnable scalars (weights, biases, batch-norm affine).
std::size_t count_parameters(const ModelGraph& graph);

/// Parameter count contributed by one layer given its input shape.
std::size_t layer_parameters(const LayerSpec& layer, const TensorShape& in);

/// Human-readable layer table with shapes and parameter counts.
std::string describe(const ModelGraph& graph);

nlohmann::json to_json(const ModelGraph& graph);
ModelGraph graph_from_json(const nlohmann::json& j);

}  // namespace pdac::nn
