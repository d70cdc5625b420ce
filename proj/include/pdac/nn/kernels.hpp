#pragma once

// Compute kernels for the network executor. Every kernel exists twice:
// `ref::` is a direct serial loop nest kept as the test oracle, and `par::`
// is the OpenMP + GEMM implementation the executor runs. Both share the
// signatures below and must agree to floating-point tolerance.

#include <cstddef>
#include <span>
#include <vector>

#include "pdac/nn/tensor.hpp"

namespace pdac::nn {

/// Convolution window geometry. Padding may differ per side so that even
/// kernels can keep "same" extents.
struct ConvGeometry {
  Dim3 kernel{1, 1, 1};
  Dim3 stride{1, 1, 1};
  Dim3 pad_lo{0, 0, 0};
  Dim3 pad_hi{0, 0, 0};

  /// Output extent of a convolution over `in`; throws ShapeMismatch when the
  /// padded input is smaller than the kernel.
  Dim3 output_extent(const Dim3& in) const;
};

/// Batch-norm state touched by one forward call.
template <typename T>
struct BatchNormCache {
  std::vector<T> mean;
  std::vector<T> invstd;
  std::vector<T> xhat;
};

namespace ref {
#include "pdac/nn/kernels_decl.inc"
}  // namespace ref

namespace par {
#include "pdac/nn/kernels_decl.inc"
}  // namespace par

}  // namespace pdac::nn
