#pragma once

#include <cstdint>
#include <vector>

#include "pdac/volume.hpp"

namespace pdac::preprocess {

/// HU window mapped affinely onto [0, 1].
struct WindowSpec {
  double lo = -100.0;
  double hi = 170.0;
};

enum class CenterPolicy { MaskCentroid, MaskBBoxCenter };

struct RoiSpec {
  std::size_t edge = 32;
  CenterPolicy center_policy = CenterPolicy::MaskCentroid;
  /// Fill for voxels outside the source volume (the window's lower bound in
  /// normalized space).
  float pad_value = 0.0f;
};

enum class Axis { X, Y, Z };

/// Trilinear resampling onto an isotropic grid of `target_mm` spacing. Output
/// voxel i sits at physical coordinate i * target_mm along each axis, sampled
/// from the input with edge clamping.
Volume resample_isotropic(const Volume& v, double target_mm);

/// clamp((hu - lo) / (hi - lo), 0, 1). Rejects already-normalized input.
Volume window_hu(const Volume& v, const WindowSpec& w = {});

/// Replaces voxels above `threshold_hu` with the mean HU inside `organ_mask`
/// (computed before replacement).
Volume remove_marker_defects(const Volume& v, const Mask& organ_mask, float threshold_hu = 200.0f);
/// Same, with the mean taken over the whole volume.
Volume remove_marker_defects(const Volume& v, float threshold_hu = 200.0f);

/// Cube of `spec.edge` voxels centred on the mask, clamped inside the volume;
/// axes shorter than the edge are centred and padded.
Volume crop_roi(const Volume& v, const Mask& mask, const RoiSpec& spec);

/// Rotation about the volume centre by `degrees` around `axis`; trilinear
/// sampling, out-of-volume samples read `pad`.
Volume rotate(const Volume& v, Axis axis, double degrees, float pad = 0.0f);

/// Mirror along one or more axes.
Volume flip(const Volume& v, bool fx, bool fy, bool fz);

inline constexpr double kGanRotationAngles[] = {12.0, 24.0, 36.0, 48.0, 72.0};
inline constexpr double kClassifierRotationAngles[] = {5.0, 10.0, 20.0, 40.0};

/// 3 axes x 5 angles = 15 rotated copies, followed by 6 flipped copies
/// (single-axis and axis-pair flips) when `with_flips` is set.
std::vector<Volume> augment_gan(const Volume& v, bool with_flips = false);

/// One random rotation: axis, angle from {5, 10, 20, 40} degrees and
/// direction are drawn uniformly from a generator seeded with `rng_seed`.
Volume augment_classifier(const Volume& v, std::uint64_t rng_seed);

struct ClassifierRotation {
  Axis axis;
  double degrees;  // signed
};
/// The draw `augment_classifier` would make for a seed.
ClassifierRotation draw_classifier_rotation(std::uint64_t rng_seed);

/// Full chain for one scan: defect repair (HU) -> resample -> window ->
/// crop. The mask is resampled with nearest-neighbour sampling.
struct PipelineOptions {
  double target_mm = 1.0;
  float defect_threshold_hu = 200.0f;
  bool repair_defects = true;
  WindowSpec window{};
  RoiSpec roi{};
};
Volume run_pipeline(const Volume& raw_hu, const Mask& organ_mask, const PipelineOptions& opt);

/// Nearest-neighbour resample of a mask onto the grid `resample_isotropic`
/// would produce.
Mask resample_mask(const Mask& mask, Spacing3 spacing, double target_mm);

}  // namespace pdac::preprocess
