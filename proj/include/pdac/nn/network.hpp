#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdac/nn/graph.hpp"
#include "pdac/nn/kernels.hpp"
#include "pdac/nn/tensor.hpp"

namespace pdac::nn {

enum class Mode { Train, Eval };

template <typename T>
struct ParamView {
  std::string name;
  std::span<T> value;
  std::span<T> grad;
};

/// Executes a ModelGraph: owns parameters, gradients, batch-norm running
/// statistics and the activations of the last forward pass.
template <typename T>
class Network {
 public:
  static constexpr double kBatchNormEps = 1e-5;
  static constexpr double kBatchNormMomentum = 0.1;

  explicit Network(ModelGraph graph);

  const ModelGraph& graph() const noexcept { return graph_; }
  std::size_t layer_count() const noexcept { return graph_.layers.size(); }

  /// Runs layers [0, stop) (all layers when stop is npos) and returns the
  /// last computed activation. Activations are kept for backward().
  const Tensor<T>& forward(const Tensor<T>& x, Mode mode, std::size_t stop = static_cast<std::size_t>(-1));

  /// Back-propagates `dy` (shaped like the last forward output) through the
  /// layers computed by the last forward call. Parameter gradients
  /// accumulate unless frozen; the input gradient is returned.
  Tensor<T> backward(const Tensor<T>& dy);
  /// Same, with extra gradients added at the outputs of earlier layers.
  Tensor<T> backward(const Tensor<T>& dy, std::span<const std::pair<std::size_t, Tensor<T>>> taps);

  void zero_grad();
  /// Frozen networks skip parameter gradients in backward().
  void set_frozen(bool frozen) noexcept { frozen_ = frozen; }
  bool frozen() const noexcept { return frozen_; }
  void set_dropout_seed(std::uint64_t seed) { dropout_rng_.seed(seed); }

  std::vector<ParamView<T>> parameters();
  /// Batch-norm running mean / variance, in layer order.
  std::vector<std::span<T>> buffers();
  std::size_t parameter_count() const noexcept;

  const Tensor<T>& activation(std::size_t layer) const { return layers_.at(layer).out; }

 private:
  struct LayerState {
    std::vector<T> w, b, dw, db;
    std::vector<T> running_mean, running_var;
    Tensor<T> in;   // input after skip concatenation
    Tensor<T> out;
    BatchNormCache<T> bn;
    std::vector<std::size_t> argmax;
    std::vector<T> drop_mask;
    Mode mode = Mode::Eval;
  };

  void initialize();
  Tensor<T> gather_input(std::size_t i, const Tensor<T>& x) const;
  void run_layer(std::size_t i, Mode mode);
  Tensor<T> layer_backward(std::size_t i, const Tensor<T>& dy);

  ModelGraph graph_;
  std::vector<TensorShape> shapes_;
  std::vector<LayerState> layers_;
  Tensor<T> passthrough_;
  std::size_t computed_ = 0;
  bool frozen_ = false;
  std::mt19937_64 dropout_rng_{0};
};

extern template class Network<float>;
extern template class Network<double>;

/// Adam with bias correction.
template <typename T>
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Network<T>& net);
  double learning_rate() const noexcept { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace pdac::nn
