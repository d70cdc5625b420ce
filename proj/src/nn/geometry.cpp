#include "pdac/error.hpp"
#include "pdac/nn/kernels.hpp"

namespace pdac::nn {
namespace {
std::size_t axis_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t lo, std::size_t hi) {
  const std::size_t padded = in + lo + hi;
  if (padded < k || s == 0) {
    throw Error(ErrorKind::ShapeMismatch,
                "kernel " + std::to_string(k) + " does not fit padded extent " + std::to_string(padded));
  }
  return (padded - k) / s + 1;
}
}  // namespace

Dim3 ConvGeometry::output_extent(const Dim3& in) const {
  return {axis_extent(in.d, kernel.d, stride.d, pad_lo.d, pad_hi.d),
          axis_extent(in.h, kernel.h, stride.h, pad_lo.h, pad_hi.h),
          axis_extent(in.w, kernel.w, stride.w, pad_lo.w, pad_hi.w)};
}

}  // namespace pdac::nn
