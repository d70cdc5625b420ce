#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pdac/volume.hpp"

namespace pdac::cli {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  void set(long x, long y, std::array<std::uint8_t, 3> c);
};

/// [0, 1] -> [0, 255], rounding half up.
std::uint8_t to_gray8(float v) noexcept;

/// Throws WriteFailure.
void write_png(const GrayImage& image, const std::filesystem::path& path);
void write_png(const RgbImage& image, const std::filesystem::path& path);

/// Any PNG, converted to 8-bit grayscale. Throws MissingFile, MalformedHeader.
GrayImage read_png_gray(const std::filesystem::path& path);

/// `<stem>_sag.png`, `<stem>_ax.png`, `<stem>_cor.png` holding the centre
/// slice of each plane. The volume must be normalized.
std::array<std::filesystem::path, 3> export_slices(const Volume& volume, const std::filesystem::path& out_dir,
                                                   const std::string& stem = "slice");

struct PlotSeries {
  std::vector<std::pair<double, double>> points;  // in [0, 1]^2
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

/// Line plot on the unit square with a light grid; `chance_diagonal` adds the
/// y = x reference used for ROC plots.
void plot_curves(const std::vector<PlotSeries>& series, bool chance_diagonal, const std::filesystem::path& path,
                 std::size_t size = 400);

}  // namespace pdac::cli
