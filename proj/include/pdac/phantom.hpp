#pragma once

#include <cstdint>
#include <vector>

#include "pdac/volume.hpp"

namespace pdac::phantom {

// Seeded synthetic volumes in normalized space, used as toy data for
// training smoke runs and metric checks.

/// Soft-edged bright sphere on a dark background; radius and centre jitter
/// with the seed.
Volume sphere(std::size_t edge, std::uint64_t seed);
std::vector<Volume> spheres(std::size_t count, std::size_t edge, std::uint64_t seed);

/// Smooth random texture around `mean` with amplitude `amplitude`: a sum of
/// seeded low-frequency cosines plus light voxel noise.
Volume texture(std::size_t edge, float mean, float amplitude, std::uint64_t seed);

/// Constant cube.
Volume constant(std::size_t edge, float value);

/// Independent uniform noise in [0, 1].
Volume noise(std::size_t edge, std::uint64_t seed);

/// Hypodense lesion: a soft ellipsoid of roughly `core` intensity inside a
/// dark surround, with a thin sub-threshold rim at `rim` intensity.
Volume lesion(std::size_t edge, float core, float rim, std::uint64_t seed);

/// Textured tissue around `tissue_mean` with a soft hypodense sphere of
/// `radius` voxels at the centre, `contrast` darker than its surroundings.
Volume embedded_lesion(std::size_t edge, float tissue_mean, float contrast, double radius, std::uint64_t seed);

/// Classifier toy data: textured tissue, with a bright blob when `tumor`.
Volume blob_case(std::size_t edge, bool tumor, std::uint64_t seed);

}  // namespace pdac::phantom
