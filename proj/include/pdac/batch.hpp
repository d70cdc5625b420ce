#pragma once

#include <cstdint>
#include <vector>

#include "pdac/nn/tensor.hpp"
#include "pdac/volume.hpp"

namespace pdac {

// Volumes and NCDHW tensors share a memory layout: tensor (d, h, w) is
// volume (z, y, x), so conversion is a straight copy per sample.

/// Stacks cubes of equal extent into an (N, 1, D, H, W) tensor.
nn::Tensor<float> to_batch(const std::vector<Volume>& volumes);
nn::Tensor<float> to_batch(const std::vector<const Volume*>& volumes);

/// Splits channel 0 of every sample back into volumes. Values are clamped to
/// [0, 1] when `space` is Normalized.
std::vector<Volume> from_batch(const nn::Tensor<float>& t, IntensitySpace space = IntensitySpace::Normalized,
                               Spacing3 spacing = {});

/// (n, 1, edge, edge, edge) standard-normal noise from a seeded generator.
nn::Tensor<float> sample_noise(std::size_t n, std::size_t edge, std::uint64_t seed);

}  // namespace pdac
