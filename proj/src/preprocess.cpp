#include "pdac/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "pdac/error.hpp"

namespace pdac::preprocess {
namespace {

/// Trilinear read at a fractional index; corners outside the grid read `pad`.
float sample_padded(const Grid3<float>& g, double fx, double fy, double fz, float pad) {
  const double x0f = std::floor(fx), y0f = std::floor(fy), z0f = std::floor(fz);
  const long x0 = static_cast<long>(x0f), y0 = static_cast<long>(y0f), z0 = static_cast<long>(z0f);
  const double tx = fx - x0f, ty = fy - y0f, tz = fz - z0f;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? tz : 1.0 - tz;
    if (wz == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? ty : 1.0 - ty;
      if (wy == 0.0) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? tx : 1.0 - tx;
        if (wx == 0.0) continue;
        const long x = x0 + dx, y = y0 + dy, z = z0 + dz;
        const float v = g.in_bounds(x, y, z)
                            ? g(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z))
                            : pad;
        acc += wx * wy * wz * v;
      }
    }
  }
  return static_cast<float>(acc);
}

/// Trilinear read with coordinates clamped into the grid.
float sample_clamped(const Grid3<float>& g, double fx, double fy, double fz) {
  const auto& e = g.extent();
  fx = std::clamp(fx, 0.0, static_cast<double>(e.nx - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(e.ny - 1));
  fz = std::clamp(fz, 0.0, static_cast<double>(e.nz - 1));
  return sample_padded(g, fx, fy, fz, 0.0f);
}

std::size_t resampled_dim(std::size_t n, double spacing, double target) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * spacing / target));
}

void require_cube(const Volume& v) {
  if (!v.is_cube()) throw Error(ErrorKind::NonCubeInput, "augmentation expects a cubic volume");
}

}  // namespace

Volume resample_isotropic(const Volume& v, double target_mm) {
  if (!(target_mm > 0.0)) throw Error(ErrorKind::DegenerateOutput, "target spacing must be positive");
  const auto& in = v.extent();
  const auto& sp = v.spacing();
  const Extent3 out{resampled_dim(in.nx, sp.sx, target_mm), resampled_dim(in.ny, sp.sy, target_mm),
                    resampled_dim(in.nz, sp.sz, target_mm)};
  if (out.nx == 0 || out.ny == 0 || out.nz == 0) {
    throw Error(ErrorKind::DegenerateOutput, "resampling would produce an empty axis");
  }
  if (sp.sx == target_mm && sp.sy == target_mm && sp.sz == target_mm) return v;

  Grid3<float> g(out);
  const double rx = target_mm / sp.sx, ry = target_mm / sp.sy, rz = target_mm / sp.sz;
#pragma omp parallel for schedule(static)
  for (long z = 0; z < static_cast<long>(out.nz); ++z) {
    for (std::size_t y = 0; y < out.ny; ++y) {
      for (std::size_t x = 0; x < out.nx; ++x) {
        g(x, y, static_cast<std::size_t>(z)) =
            sample_clamped(v.grid(), static_cast<double>(x) * rx, static_cast<double>(y) * ry,
                           static_cast<double>(z) * rz);
      }
    }
  }
  return Volume(std::move(g), {target_mm, target_mm, target_mm}, v.space());
}

Mask resample_mask(const Mask& mask, Spacing3 spacing, double target_mm) {
  const auto& in = mask.extent();
  const Extent3 out{resampled_dim(in.nx, spacing.sx, target_mm), resampled_dim(in.ny, spacing.sy, target_mm),
                    resampled_dim(in.nz, spacing.sz, target_mm)};
  if (out.nx == 0 || out.ny == 0 || out.nz == 0) {
    throw Error(ErrorKind::DegenerateOutput, "resampling would produce an empty axis");
  }
  auto nearest = [](std::size_t i, double ratio, std::size_t n) {
    const auto j = static_cast<long>(std::llround(static_cast<double>(i) * ratio));
    return static_cast<std::size_t>(std::clamp<long>(j, 0, static_cast<long>(n) - 1));
  };
  Mask m(out);
  for (std::size_t z = 0; z < out.nz; ++z)
    for (std::size_t y = 0; y < out.ny; ++y)
      for (std::size_t x = 0; x < out.nx; ++x)
        m(x, y, z) = mask(nearest(x, target_mm / spacing.sx, in.nx), nearest(y, target_mm / spacing.sy, in.ny),
                          nearest(z, target_mm / spacing.sz, in.nz));
  return m;
}

Volume window_hu(const Volume& v, const WindowSpec& w) {
  if (v.space() != IntensitySpace::HU) {
    throw Error(ErrorKind::AlreadyNormalized, "window_hu expects HU input");
  }
  if (!(w.lo < w.hi)) throw Error(ErrorKind::InvalidConfig, "window needs lo < hi");
  Grid3<float> g(v.extent());
  const double span = w.hi - w.lo;
  const auto in = v.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    g[i] = static_cast<float>(std::clamp((static_cast<double>(in[i]) - w.lo) / span, 0.0, 1.0));
  }
  return Volume(std::move(g), v.spacing(), IntensitySpace::Normalized);
}

namespace {
Volume replace_above(const Volume& v, float threshold_hu, double mean) {
  Grid3<float> g = v.grid();
  for (auto& x : g.values())
    if (x > threshold_hu) x = static_cast<float>(mean);
  return Volume(std::move(g), v.spacing(), v.space());
}
}  // namespace

Volume remove_marker_defects(const Volume& v, const Mask& organ_mask, float threshold_hu) {
  if (organ_mask.extent() != v.extent()) {
    throw Error(ErrorKind::ShapeMismatch, "organ mask shape differs from volume");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.values().size(); ++i) {
    if (organ_mask[i]) {
      sum += v.values()[i];
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorKind::EmptyMask, "organ mask is empty");
  return replace_above(v, threshold_hu, sum / static_cast<double>(n));
}

Volume remove_marker_defects(const Volume& v, float threshold_hu) {
  double sum = 0.0;
  for (float x : v.values()) sum += x;
  return replace_above(v, threshold_hu, sum / static_cast<double>(v.values().size()));
}

Volume crop_roi(const Volume& v, const Mask& mask, const RoiSpec& spec) {
  if (mask.extent() != v.extent()) throw Error(ErrorKind::ShapeMismatch, "mask shape differs from volume");
  if (spec.edge == 0) throw Error(ErrorKind::InvalidConfig, "ROI edge must be positive");
  const auto& e = v.extent();

  std::array<double, 3> sum{};
  std::array<std::size_t, 3> lo{e.nx, e.ny, e.nz}, hi{0, 0, 0};
  std::size_t n = 0;
  for (std::size_t z = 0; z < e.nz; ++z)
    for (std::size_t y = 0; y < e.ny; ++y)
      for (std::size_t x = 0; x < e.nx; ++x) {
        if (!mask(x, y, z)) continue;
        const std::array<std::size_t, 3> p{x, y, z};
        for (int a = 0; a < 3; ++a) {
          sum[a] += static_cast<double>(p[a]);
          lo[a] = std::min(lo[a], p[a]);
          hi[a] = std::max(hi[a], p[a]);
        }
        ++n;
      }
  if (n == 0) throw Error(ErrorKind::EmptyMask, "ROI mask is empty");

  const std::array<std::size_t, 3> dims{e.nx, e.ny, e.nz};
  const long edge = static_cast<long>(spec.edge);
  // Source index of output index 0 along each axis (may be negative when padding).
  std::array<long, 3> origin{};
  for (int a = 0; a < 3; ++a) {
    const long centre = spec.center_policy == CenterPolicy::MaskCentroid
                            ? static_cast<long>(std::llround(sum[a] / static_cast<double>(n)))
                            : static_cast<long>((lo[a] + hi[a]) / 2);
    const long dim = static_cast<long>(dims[a]);
    if (dim >= edge) {
      origin[a] = std::clamp(centre - edge / 2, 0L, dim - edge);
    } else {
      origin[a] = -((edge - dim) / 2);
    }
  }

  Grid3<float> g(Extent3{spec.edge, spec.edge, spec.edge}, spec.pad_value);
  for (long z = 0; z < edge; ++z)
    for (long y = 0; y < edge; ++y)
      for (long x = 0; x < edge; ++x) {
        const long sx = x + origin[0], sy = y + origin[1], sz = z + origin[2];
        if (v.grid().in_bounds(sx, sy, sz)) {
          g(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) =
              v(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), static_cast<std::size_t>(sz));
        }
      }
  return Volume(std::move(g), v.spacing(), v.space());
}

Volume rotate(const Volume& v, Axis axis, double degrees, float pad) {
  const auto& e = v.extent();
  const double th = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double cx = (static_cast<double>(e.nx) - 1.0) / 2.0;
  const double cy = (static_cast<double>(e.ny) - 1.0) / 2.0;
  const double cz = (static_cast<double>(e.nz) - 1.0) / 2.0;

  Grid3<float> g(e);
#pragma omp parallel for schedule(static)
  for (long zl = 0; zl < static_cast<long>(e.nz); ++zl) {
    const auto z = static_cast<std::size_t>(zl);
    for (std::size_t y = 0; y < e.ny; ++y) {
      for (std::size_t x = 0; x < e.nx; ++x) {
        const double px = static_cast<double>(x) - cx, py = static_cast<double>(y) - cy,
                     pz = static_cast<double>(z) - cz;
        // Inverse mapping: output voxel reads the input at R^-1 p.
        double qx = px, qy = py, qz = pz;
        switch (axis) {
          case Axis::X: qy = c * py + s * pz; qz = -s * py + c * pz; break;
          case Axis::Y: qx = c * px - s * pz; qz = s * px + c * pz; break;
          case Axis::Z: qx = c * px + s * py; qy = -s * px + c * py; break;
        }
        g(x, y, z) = sample_padded(v.grid(), qx + cx, qy + cy, qz + cz, pad);
      }
    }
  }
  if (v.space() == IntensitySpace::Normalized) {
    for (auto& x : g.values()) x = std::clamp(x, 0.0f, 1.0f);
  }
  return Volume(std::move(g), v.spacing(), v.space());
}

Volume flip(const Volume& v, bool fx, bool fy, bool fz) {
  const auto& e = v.extent();
  Grid3<float> g(e);
  for (std::size_t z = 0; z < e.nz; ++z)
    for (std::size_t y = 0; y < e.ny; ++y)
      for (std::size_t x = 0; x < e.nx; ++x)
        g(x, y, z) = v(fx ? e.nx - 1 - x : x, fy ? e.ny - 1 - y : y, fz ? e.nz - 1 - z : z);
  return Volume(std::move(g), v.spacing(), v.space());
}

std::vector<Volume> augment_gan(const Volume& v, bool with_flips) {
  require_cube(v);
  std::vector<Volume> out;
  out.reserve(with_flips ? 21 : 15);
  for (Axis axis : {Axis::X, Axis::Y, Axis::Z})
    for (double angle : kGanRotationAngles) out.push_back(rotate(v, axis, angle));
  if (with_flips) {
    out.push_back(flip(v, true, false, false));
    out.push_back(flip(v, false, true, false));
    out.push_back(flip(v, false, false, true));
    out.push_back(flip(v, true, true, false));
    out.push_back(flip(v, true, false, true));
    out.push_back(flip(v, false, true, true));
  }
  return out;
}

ClassifierRotation draw_classifier_rotation(std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<int> axis_dist(0, 2);
  std::uniform_int_distribution<int> angle_dist(0, 3);
  std::bernoulli_distribution clockwise(0.5);
  const auto axis = static_cast<Axis>(axis_dist(rng));
  const double angle = kClassifierRotationAngles[angle_dist(rng)];
  return {axis, clockwise(rng) ? -angle : angle};
}

Volume augment_classifier(const Volume& v, std::uint64_t rng_seed) {
  require_cube(v);
  const auto r = draw_classifier_rotation(rng_seed);
  return rotate(v, r.axis, r.degrees);
}

Volume run_pipeline(const Volume& raw_hu, const Mask& organ_mask, const PipelineOptions& opt) {
  Volume v = opt.repair_defects ? remove_marker_defects(raw_hu, organ_mask, opt.defect_threshold_hu) : raw_hu;
  const Mask m = resample_mask(organ_mask, v.spacing(), opt.target_mm);
  v = resample_isotropic(v, opt.target_mm);
  v = window_hu(v, opt.window);
  return crop_roi(v, m, opt.roi);
}

}  // namespace pdac::preprocess
