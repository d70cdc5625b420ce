#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "pdac/volio.hpp"

namespace pdac::checks {

// Raw HU scans at anisotropic spacing with an ellipsoidal organ, a darker
// lesion inside it and a few bright marker voxels. Writes scan_<i>.nii.gz to
// `scans`, lesion masks to `tumor_masks` and organ masks to `organ_masks`,
// each named scan_<i>_mask.nii.gz.
inline void write_raw_scans(const std::filesystem::path& scans, const std::filesystem::path& tumor_masks,
                            const std::filesystem::path& organ_masks, int count, std::uint64_t seed) {
  namespace fs = std::filesystem;
  for (const auto& d : {scans, tumor_masks, organ_masks}) fs::create_directories(d);
  const Extent3 e{72, 72, 36};
  const Spacing3 sp{1.0, 1.0, 2.0};
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(seed * 7919 + static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> grain(0.0, 6.0);
    const double cx = 36 + 3 * u(rng), cy = 36 + 3 * u(rng), cz = 36 + 3 * u(rng);  // mm
    const double lx = cx + 4 * u(rng), ly = cy + 4 * u(rng), lz = cz + 4 * u(rng);
    const double lr = 6.0 + 1.5 * u(rng);
    const double fx = 0.2 + 0.05 * u(rng), fy = 0.17 + 0.05 * u(rng);
    Grid3<float> hu(e);
    Mask organ(e), lesion(e);
    for (std::size_t z = 0; z < e.nz; ++z)
      for (std::size_t y = 0; y < e.ny; ++y)
        for (std::size_t x = 0; x < e.nx; ++x) {
          const double px = double(x) * sp.sx, py = double(y) * sp.sy, pz = double(z) * sp.sz;
          const double ro = std::pow((px - cx) / 26, 2) + std::pow((py - cy) / 20, 2) + std::pow((pz - cz) / 22, 2);
          const double rl = std::sqrt(std::pow(px - lx, 2) + std::pow(py - ly, 2) + std::pow(pz - lz, 2));
          double v = -60.0 + grain(rng);
          if (ro <= 1.0) {
            organ(x, y, z) = 1;
            v = 45.0 + 12.0 * std::sin(fx * px + fy * py) * std::cos(0.15 * pz) + grain(rng);
          }
          if (rl <= lr) {
            lesion(x, y, z) = 1;
            v = 5.0 + 8.0 * std::cos(0.5 * rl) + grain(rng);
          }
          hu(x, y, z) = static_cast<float>(v);
        }
    for (int k = 0; k < 4; ++k) hu(static_cast<std::size_t>(cx) + k, static_cast<std::size_t>(cy), 18) = 650.0f;
    const std::string stem = "scan_" + std::to_string(i);
    volio::save_volume(Volume(std::move(hu), sp, IntensitySpace::HU), scans / (stem + ".nii.gz"));
    volio::save_mask(lesion, tumor_masks / (stem + "_mask.nii.gz"), sp);
    volio::save_mask(organ, organ_masks / (stem + "_mask.nii.gz"), sp);
  }
}

}  // namespace pdac::checks
