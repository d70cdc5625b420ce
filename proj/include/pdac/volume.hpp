#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace pdac {

/// Grid extent in voxels. Axis order is fixed project-wide as
/// (x, y, z) = (sagittal, coronal, axial); x varies fastest in memory.
struct Extent3 {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const noexcept { return nx * ny * nz; }
  bool is_cube() const noexcept { return nx == ny && ny == nz; }
  friend bool operator==(const Extent3&, const Extent3&) = default;
};

/// Millimeters per voxel along x, y, z.
struct Spacing3 {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;
  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

enum class IntensitySpace { HU, Normalized };

std::string_view to_string(IntensitySpace space) noexcept;

/// Dense 3D array with x-fastest layout.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(Extent3 extent, T fill = T{}) : extent_(extent), data_(extent.count(), fill) {}
  Grid3(Extent3 extent, std::vector<T> data);

  const Extent3& extent() const noexcept { return extent_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + extent_.nx * (y + extent_.ny * z);
  }
  T& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept { return data_[index(x, y, z)]; }
  const T& operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return data_[index(x, y, z)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool in_bounds(long x, long y, long z) const noexcept {
    return x >= 0 && y >= 0 && z >= 0 && static_cast<std::size_t>(x) < extent_.nx &&
           static_cast<std::size_t>(y) < extent_.ny && static_cast<std::size_t>(z) < extent_.nz;
  }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  Extent3 extent_{};
  std::vector<T> data_;
};

/// Binary voxel mask; nonzero entries are "inside".
using Mask = Grid3<std::uint8_t>;

std::size_t count_nonzero(const Mask& mask) noexcept;

/// 3D scalar volume with voxel spacing. Voxel values are 32-bit floats.
class Volume {
 public:
  Volume() = default;
  /// Validates the invariants: nonzero extent, positive spacing, and values
  /// inside [0, 1] when `space` is Normalized.
  Volume(Grid3<float> data, Spacing3 spacing, IntensitySpace space);

  static Volume filled(Extent3 extent, float value, Spacing3 spacing = {},
                       IntensitySpace space = IntensitySpace::HU);

  const Extent3& extent() const noexcept { return data_.extent(); }
  const Spacing3& spacing() const noexcept { return spacing_; }
  IntensitySpace space() const noexcept { return space_; }
  bool is_cube() const noexcept { return extent().is_cube(); }

  const Grid3<float>& grid() const noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_.values(); }
  float operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept { return data_(x, y, z); }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Grid3<float> data_;
  Spacing3 spacing_{};
  IntensitySpace space_ = IntensitySpace::HU;
};

/// Reference planes for slice-wise metrics.
enum class Plane { Sagittal, Axial, Coronal };

inline constexpr std::array<Plane, 3> kAllPlanes = {Plane::Sagittal, Plane::Axial, Plane::Coronal};

std::string_view to_string(Plane plane) noexcept;
/// Short column tag ("Sag", "Ax", "Cor").
std::string_view plane_tag(Plane plane) noexcept;

/// Row-major 2D image (u fastest).
struct Image2D {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  float at(std::size_t u, std::size_t v) const noexcept { return pixels[u + width * v]; }
};

/// Center slice in the given plane. Sagittal fixes x and spans (y, z);
/// coronal fixes y and spans (x, z); axial fixes z and spans (x, y).
Image2D center_slice(const Grid3<float>& grid, Plane plane);
inline Image2D center_slice(const Volume& v, Plane plane) { return center_slice(v.grid(), plane); }

}  // namespace pdac
