#include "pdac/cli/png.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "pdac/error.hpp"

namespace pdac::cli {
namespace fs = std::filesystem;

namespace {

void write_image(png_uint_32 format, std::size_t width, std::size_t height, const std::uint8_t* data,
                 std::size_t channels, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  const auto stride = static_cast<png_int_32>(width * channels);
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, data, stride, nullptr)) {
    throw Error(ErrorKind::WriteFailure, "cannot write " + path.string() + ": " + image.message);
  }
}

}  // namespace

void RgbImage::set(long x, long y, std::array<std::uint8_t, 3> c) {
  if (x < 0 || y < 0 || static_cast<std::size_t>(x) >= width || static_cast<std::size_t>(y) >= height) return;
  auto* p = &pixels[3 * (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x))];
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

std::uint8_t to_gray8(float v) noexcept {
  const double scaled = std::floor(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(scaled);
}

void write_png(const GrayImage& image, const fs::path& path) {
  write_image(PNG_FORMAT_GRAY, image.width, image.height, image.pixels.data(), 1, path);
}

void write_png(const RgbImage& image, const fs::path& path) {
  write_image(PNG_FORMAT_RGB, image.width, image.height, image.pixels.data(), 3, path);
}

GrayImage read_png_gray(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, path.string());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw Error(ErrorKind::MalformedHeader, path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage out{image.width, image.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorKind::MalformedHeader, path.string() + ": " + image.message);
  }
  return out;
}

std::array<fs::path, 3> export_slices(const Volume& volume, const fs::path& out_dir, const std::string& stem) {
  if (volume.space() != IntensitySpace::Normalized) {
    throw Error(ErrorKind::InvalidConfig, "slice export expects a normalized volume");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::array<fs::path, 3> paths;
  for (std::size_t k = 0; k < kAllPlanes.size(); ++k) {
    const auto slice = center_slice(volume, kAllPlanes[k]);
    GrayImage img{slice.width, slice.height, std::vector<std::uint8_t>(slice.pixels.size())};
    std::transform(slice.pixels.begin(), slice.pixels.end(), img.pixels.begin(), to_gray8);
    std::string tag(plane_tag(kAllPlanes[k]));
    std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char c) { return std::tolower(c); });
    paths[k] = out_dir / (stem + "_" + tag + ".png");
    write_png(img, paths[k]);
  }
  return paths;
}

void plot_curves(const std::vector<PlotSeries>& series, bool chance_diagonal, const fs::path& path,
                 std::size_t size) {
  const long n = static_cast<long>(size), margin = n / 10, span = n - 2 * margin;
  RgbImage img{size, size, std::vector<std::uint8_t>(3 * size * size, 255)};
  auto px = [&](double x) { return margin + std::lround(std::clamp(x, 0.0, 1.0) * static_cast<double>(span)); };
  auto py = [&](double y) { return n - margin - std::lround(std::clamp(y, 0.0, 1.0) * static_cast<double>(span)); };

  auto line = [&](double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> c, int thick,
                  int dash) {
    const long ax = px(x0), ay = py(y0), bx = px(x1), by = py(y1);
    const long steps = std::max({std::labs(bx - ax), std::labs(by - ay), 1L});
    for (long s = 0; s <= steps; ++s) {
      if (dash > 0 && (s / dash) % 2 == 1) continue;
      const long x = ax + (bx - ax) * s / steps, y = ay + (by - ay) * s / steps;
      for (int dx = 0; dx < thick; ++dx)
        for (int dy = 0; dy < thick; ++dy) img.set(x + dx - thick / 2, y + dy - thick / 2, c);
    }
  };

  for (int k = 1; k < 4; ++k) {
    const double t = k / 4.0;
    line(t, 0, t, 1, {225, 225, 225}, 1, 0);
    line(0, t, 1, t, {225, 225, 225}, 1, 0);
  }
  if (chance_diagonal) line(0, 0, 1, 1, {150, 150, 150}, 1, 4);
  line(0, 0, 1, 0, {0, 0, 0}, 1, 0);
  line(0, 1, 1, 1, {0, 0, 0}, 1, 0);
  line(0, 0, 0, 1, {0, 0, 0}, 1, 0);
  line(1, 0, 1, 1, {0, 0, 0}, 1, 0);
  for (const auto& s : series)
    for (std::size_t i = 1; i < s.points.size(); ++i)
      line(s.points[i - 1].first, s.points[i - 1].second, s.points[i].first, s.points[i].second, s.color, 2, 0);
  write_png(img, path);
}

}  // namespace pdac::cli
