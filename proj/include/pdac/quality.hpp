#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdac/nn/network.hpp"
#include "pdac/volume.hpp"

namespace pdac::quality {

/// Feature mean and unbiased (n - 1) covariance of a sample set.
struct GaussianSummary {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  std::size_t n = 0;
};

/// Rows of `features` are samples. Throws InsufficientSamples for n < 2.
GaussianSummary summarize(const Eigen::MatrixXd& features);

/// ||mu_a - mu_b||^2 + tr(C_a + C_b - 2 sqrt(C_a C_b)), clamped at 0.
/// Throws DimensionMismatch, NonConvergentSqrt.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

/// Frozen, seeded CNN used as an embedding. Thread-safe: concurrent embed()
/// calls serialize on an internal lock.
class FeatureNetwork {
 public:
  FeatureNetwork(nn::ModelGraph graph, std::uint64_t seed);

  const nn::ModelGraph& graph() const noexcept { return state_->net.graph(); }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t feature_length() const noexcept { return feature_length_; }
  std::size_t edge() const noexcept { return graph().input.s.w; }

  /// One feature row per input sample.
  Eigen::MatrixXd embed(const nn::Tensor<float>& batch) const;
  Eigen::MatrixXd embed(const std::vector<Volume>& volumes) const;

  /// Runs layers [0, stop) in inference mode, lets `grad_fn(activation,
  /// d_activation)` fill the loss gradient at that depth, and writes the
  /// matching gradient with respect to `x` into `grad_input`.
  template <typename GradFn>
  void features_with_gradient(const nn::Tensor<float>& x, std::size_t stop, GradFn&& grad_fn,
                              nn::Tensor<float>& grad_input) const {
    std::lock_guard lock(state_->mu);
    const auto& a = state_->net.forward(x, nn::Mode::Eval, stop);
    nn::Tensor<float> da(a.shape());
    grad_fn(a, da);
    grad_input = state_->net.backward(da);
  }

  /// Runs layers [0, max(layers) + 1) and back-propagates the gradients that
  /// `grad_fn(k, activation, d_activation)` supplies for each listed layer.
  template <typename GradFn>
  void taps_with_gradient(const nn::Tensor<float>& x, const std::vector<std::size_t>& layers, GradFn&& grad_fn,
                          nn::Tensor<float>& grad_input) const {
    std::lock_guard lock(state_->mu);
    std::size_t stop = 0;
    for (auto l : layers) stop = std::max(stop, l + 1);
    state_->net.forward(x, nn::Mode::Eval, stop);
    std::vector<std::pair<std::size_t, nn::Tensor<float>>> taps;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& a = state_->net.activation(layers[k]);
      nn::Tensor<float> da(a.shape());
      grad_fn(k, a, da);
      taps.emplace_back(layers[k], std::move(da));
    }
    const auto& out = state_->net.activation(stop - 1);
    grad_input = state_->net.backward(nn::Tensor<float>(out.shape()), taps);
  }

 private:
  struct State {
    explicit State(nn::ModelGraph g) : net(std::move(g)) {}
    nn::Network<float> net;
    std::mutex mu;
  };
  std::shared_ptr<State> state_;
  std::uint64_t seed_;
  std::size_t feature_length_;
};

inline constexpr std::uint64_t kFeatureSeed = 42;
inline constexpr std::size_t kFeatureLength = 512;
/// Layers per block: conv, pool, activation, normalization.
inline constexpr std::size_t kFeatureBlockLayers = 4;

/// Four (conv 3^3 -> max-pool 2 -> ReLU -> batch-norm) blocks ending in 512
/// channels and a global average pool: 17 layers, 512 features for any edge
/// divisible by 16. Throws InvalidEdge.
FeatureNetwork build_feature_network(std::uint64_t seed = kFeatureSeed, std::size_t edge = 64);

/// The first `blocks` blocks of build_feature_network, with identical
/// weights; edge must be divisible by 2^blocks. Throws InvalidEdge.
FeatureNetwork build_feature_prefix(std::size_t blocks, std::uint64_t seed = kFeatureSeed, std::size_t edge = 64);

/// 2D counterpart for slice-wise FID: the same block structure with in-plane
/// (1 x 3 x 3) kernels and (1 x 2 x 2) pooling on single slices.
FeatureNetwork build_slice_feature_network(std::uint64_t seed = kFeatureSeed, std::size_t edge = 64);

/// Embeds 2D images of equal size with a slice feature network.
Eigen::MatrixXd embed_slices(const FeatureNetwork& net, const std::vector<Image2D>& slices);

/// Fréchet distance between center-slice embeddings of two volume sets.
/// Throws InsufficientSamples.
double slice_fid(const std::vector<Volume>& set_a, const std::vector<Volume>& set_b, Plane plane,
                 const FeatureNetwork& extractor);

enum class Pairing { Index, Nearest };

struct PsnrResult {
  double mean_db = 0.0;          // over pairs with nonzero MSE
  std::size_t finite_pairs = 0;
  std::size_t identical_pairs = 0;  // pairs that hit the +INF sentinel
};

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) in normalized space (MAX = 1); +INF when equal.
/// Throws ShapeMismatch.
double psnr(std::span<const double> a, std::span<const double> b);
double psnr(const Image2D& a, const Image2D& b);

/// Center-slice PSNR averaged over pairs. Index pairing requires equal set
/// sizes; nearest pairing matches each volume of `set_a` with the `set_b`
/// slice of lowest MSE. Throws ShapeMismatch.
PsnrResult slice_psnr(const std::vector<Volume>& set_a, const std::vector<Volume>& set_b, Plane plane,
                      Pairing pairing = Pairing::Index);
PsnrResult slice_psnr(const std::vector<std::pair<Volume, Volume>>& pairs, Plane plane);

/// Fréchet distance between 512-d volume embeddings of two batches.
/// Throws InsufficientSamples, ShapeMismatch.
double f3d(const std::vector<Volume>& batch_a, const std::vector<Volume>& batch_b, const FeatureNetwork& net);

struct MmdOptions {
  std::optional<double> bandwidth;  // median pairwise distance when unset
  bool biased = false;
};

/// Squared MMD with k(a, b) = exp(-|a - b|^2 / (2 h^2)). Rows are samples.
/// Throws InsufficientSamples, DimensionMismatch.
double mmd2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const MmdOptions& opt = {});
/// Same on flattened voxel vectors.
double mmd2(const std::vector<Volume>& a, const std::vector<Volume>& b, const MmdOptions& opt = {});

inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Volumetric MS-SSIM of two equal-shape grids (Gaussian window sigma 1.5,
/// 5 dyadic scales, dynamic range 1). Throws TooSmallForScales.
double ms_ssim(const Grid3<float>& a, const Grid3<float>& b);

/// Mean MS-SSIM over all unordered pairs. Throws InsufficientSamples,
/// TooSmallForScales, ShapeMismatch.
double ms_ssim_pairwise(const std::vector<Volume>& set);

/// Mean MS-SSIM over index-aligned (a_i, b_i) pairs. Throws ShapeMismatch,
/// InsufficientSamples, TooSmallForScales.
double ms_ssim_paired(const std::vector<Volume>& set_a, const std::vector<Volume>& set_b);

struct MetricReport {
  std::array<double, 3> fid{};   // indexed like kAllPlanes
  std::array<PsnrResult, 3> psnr{};
  double f3d = 0.0;
  double mmd2 = 0.0;
  double ms_ssim = 0.0;            // reference vs synthesized, index-paired
  double ms_ssim_diversity = 0.0;  // within the synthesized set
  std::size_t count_a = 0;
  std::size_t count_b = 0;
};

struct EvaluateOptions {
  Pairing pairing = Pairing::Index;
  MmdOptions mmd{};
  std::uint64_t feature_seed = kFeatureSeed;
};

/// All metrics for a synthesized set against a reference set. Sets must be
/// cubes of one edge, divisible by 16 and at least 32.
MetricReport evaluate(const std::vector<Volume>& reference, const std::vector<Volume>& synthesized,
                      const EvaluateOptions& opt = {});

/// "Tissue,Model,FID-Sag,FID-Ax,FID-Cor,PSNR-Sag,PSNR-Ax,PSNR-Cor" rows.
void write_slice_table(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& labels,
                       const std::vector<MetricReport>& reports);
/// "Tissue,Model,F3D,MMD2,MS-SSIM,MS-SSIM-Diversity" rows.
void write_volume_table(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, std::string>>& labels,
                        const std::vector<MetricReport>& reports);

/// Fixed-precision number formatting shared by report writers; +INF and NaN
/// print as "inf" and "nan".
std::string format_number(double v, int precision = 6);

}  // namespace pdac::quality
