#include "pdac/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pdac/error.hpp"

namespace pdac {

std::string_view to_string(IntensitySpace space) noexcept {
  return space == IntensitySpace::HU ? "HU" : "NORMALIZED";
}

std::string_view to_string(Plane plane) noexcept {
  switch (plane) {
    case Plane::Sagittal: return "sagittal";
    case Plane::Axial: return "axial";
    case Plane::Coronal: return "coronal";
  }
  return "unknown";
}

std::string_view plane_tag(Plane plane) noexcept {
  switch (plane) {
    case Plane::Sagittal: return "Sag";
    case Plane::Axial: return "Ax";
    case Plane::Coronal: return "Cor";
  }
  return "?";
}

template <typename T>
Grid3<T>::Grid3(Extent3 extent, std::vector<T> data) : extent_(extent), data_(std::move(data)) {
  if (data_.size() != extent_.count()) {
    throw Error(ErrorKind::ShapeMismatch, "grid payload has " + std::to_string(data_.size()) +
                                              " values, extent needs " + std::to_string(extent_.count()));
  }
}

template class Grid3<float>;
template class Grid3<double>;
template class Grid3<std::uint8_t>;

std::size_t count_nonzero(const Mask& mask) noexcept {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(), [](std::uint8_t m) { return m != 0; }));
}

Volume::Volume(Grid3<float> data, Spacing3 spacing, IntensitySpace space)
    : data_(std::move(data)), spacing_(spacing), space_(space) {
  const auto& e = data_.extent();
  if (e.nx == 0 || e.ny == 0 || e.nz == 0) {
    throw Error(ErrorKind::ShapeMismatch, "volume dimensions must all be >= 1");
  }
  if (!(spacing_.sx > 0.0 && spacing_.sy > 0.0 && spacing_.sz > 0.0)) {
    throw Error(ErrorKind::MalformedHeader, "voxel spacing must be positive");
  }
  if (space_ == IntensitySpace::Normalized) {
    for (float v : data_.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw Error(ErrorKind::ShapeMismatch,
                    "normalized volume has voxel outside [0,1]: " + std::to_string(v));
      }
    }
  }
}

Volume Volume::filled(Extent3 extent, float value, Spacing3 spacing, IntensitySpace space) {
  return Volume(Grid3<float>(extent, value), spacing, space);
}

Image2D center_slice(const Grid3<float>& grid, Plane plane) {
  const auto& e = grid.extent();
  Image2D img;
  switch (plane) {
    case Plane::Sagittal: {
      const std::size_t x = e.nx / 2;
      img.width = e.ny;
      img.height = e.nz;
      img.pixels.resize(img.width * img.height);
      for (std::size_t z = 0; z < e.nz; ++z)
        for (std::size_t y = 0; y < e.ny; ++y) img.pixels[y + e.ny * z] = grid(x, y, z);
      break;
    }
    case Plane::Coronal: {
      const std::size_t y = e.ny / 2;
      img.width = e.nx;
      img.height = e.nz;
      img.pixels.resize(img.width * img.height);
      for (std::size_t z = 0; z < e.nz; ++z)
        for (std::size_t x = 0; x < e.nx; ++x) img.pixels[x + e.nx * z] = grid(x, y, z);
      break;
    }
    case Plane::Axial: {
      const std::size_t z = e.nz / 2;
      img.width = e.nx;
      img.height = e.ny;
      img.pixels.resize(img.width * img.height);
      for (std::size_t y = 0; y < e.ny; ++y)
        for (std::size_t x = 0; x < e.nx; ++x) img.pixels[x + e.nx * y] = grid(x, y, z);
      break;
    }
  }
  return img;
}

}  // namespace pdac
