#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdac/quality.hpp"
#include "pdac/volume.hpp"

namespace pdac::blend {

enum class Method { CopyPaste, Gradient, Style };  // Blend I, II, III

std::string method_name(Method m);  // "Blend I" ...

/// Voxel position of the tumor cube origin inside the pancreas cube.
struct Offset3 {
  long x = 0, y = 0, z = 0;
  friend bool operator==(const Offset3&, const Offset3&) = default;
};

struct BlendRequest {
  Volume tumor;     // normalized, typically 32^3
  Volume pancreas;  // normalized, typically 64^3
  std::optional<Offset3> insert_offset;  // centered when unset
  float mask_threshold = 0.1f;
  Method method = Method::CopyPaste;
};

enum class Solver { Jacobi, ConjugateGradient };

struct PoissonSolveConfig {
  int max_iterations = 5000;
  double residual_tolerance = 1e-6;  // max-norm of the per-voxel residual
  Solver solver = Solver::ConjugateGradient;
};

struct StyleConfig {
  int iterations = 100;
  double step_size = 0.01;  // Adam step on voxel intensities
  double w_grad = 1.0;
  double w_style = 0.1;
  double w_tv = 0.01;
  std::size_t feature_blocks = 2;
  std::uint64_t feature_seed = quality::kFeatureSeed;
};

/// Throws InvalidConfig.
void validate(const PoissonSolveConfig& cfg);
void validate(const StyleConfig& cfg);

/// Centered placement of `inner` inside `outer`.
Offset3 centered_offset(const Extent3& outer, const Extent3& inner);

/// Voxels above `threshold`, reduced to the largest 6-connected component.
/// Throws EmptyMaskResult.
Mask extract_tumor_mask(const Volume& tumor, float threshold);

/// Blend I: in-mask voxels take tumor values, everything else stays.
/// Throws OffsetOutOfBounds, EmptyMaskResult.
Volume blend_copy_paste(const BlendRequest& req);

struct PoissonStats {
  int iterations = 0;
  double residual = 0.0;
  std::size_t unknowns = 0;
};

/// Blend II: inside the mask the 6-neighbour Laplacian of the output matches
/// the tumor's; pancreas values are fixed on and outside the mask boundary
/// and on the pancreas faces. Throws SolverDiverged, OffsetOutOfBounds.
Volume blend_gradient(const BlendRequest& req, const PoissonSolveConfig& solve = {},
                      PoissonStats* stats = nullptr);

/// Blend III: refines Blend II by Adam on in-mask voxels against
/// w_grad * Poisson residual + w_style * Gram distance to the pancreas
/// background + w_tv * total variation. Returns Blend II unchanged when
/// w_style or iterations is zero. Throws SolverDiverged.
Volume blend_style(const BlendRequest& req, const PoissonSolveConfig& solve = {}, const StyleConfig& style = {});

/// Dispatches on req.method.
Volume blend(const BlendRequest& req, const PoissonSolveConfig& solve = {}, const StyleConfig& style = {});

/// Blends tumors[i] into pancreases[i] for every i. Throws ShapeMismatch
/// when the lists differ in length.
std::vector<Volume> blend_all(Method method, const std::vector<Volume>& tumors, const std::vector<Volume>& pancreases,
                              const PoissonSolveConfig& solve = {}, const StyleConfig& style = {},
                              float mask_threshold = 0.1f);

struct MethodScore {
  Method method = Method::CopyPaste;
  std::array<double, 3> fid{};  // indexed like kAllPlanes
};

struct BlendRanking {
  std::vector<MethodScore> scores;            // in input order
  std::array<std::vector<Method>, 3> order;  // per plane, best first
};

/// Slice-wise FID of each method's outputs against `reference`. Throws
/// InsufficientSamples when any set has fewer than two volumes.
BlendRanking rank_outputs(const std::vector<std::pair<Method, std::vector<Volume>>>& outputs,
                          const std::vector<Volume>& reference, std::uint64_t feature_seed = quality::kFeatureSeed);

/// Blends with all three methods and ranks them.
BlendRanking rank_blends(const std::vector<Volume>& tumors, const std::vector<Volume>& pancreases,
                         const std::vector<Volume>& reference, const PoissonSolveConfig& solve = {},
                         const StyleConfig& style = {});

/// "Blending Methods,FID-Sag,FID-Ax,FID-Cor".
void write_blend_table(const BlendRanking& ranking, const std::filesystem::path& path);

}  // namespace pdac::blend
