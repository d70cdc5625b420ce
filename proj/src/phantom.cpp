#include "pdac/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace pdac::phantom {
namespace {

Volume normalized(Grid3<float> g) {
  for (auto& v : g.values()) v = std::clamp(v, 0.0f, 1.0f);
  return Volume(std::move(g), {}, IntensitySpace::Normalized);
}

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

}  // namespace

Volume sphere(std::size_t edge, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.08, 0.08), radius(0.22, 0.32), level(0.75, 0.95);
  const double n = static_cast<double>(edge);
  const double cx = n * (0.5 + jitter(rng)), cy = n * (0.5 + jitter(rng)), cz = n * (0.5 + jitter(rng));
  const double r = n * radius(rng);
  const double inside = level(rng);
  Grid3<float> g({edge, edge, edge});
  for (std::size_t z = 0; z < edge; ++z)
    for (std::size_t y = 0; y < edge; ++y)
      for (std::size_t x = 0; x < edge; ++x) {
        const double d = std::sqrt((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy) +
                                   (z + 0.5 - cz) * (z + 0.5 - cz));
        g(x, y, z) = static_cast<float>(0.05 + (inside - 0.05) * (1.0 - smoothstep(r - 1.0, r + 1.0, d)));
      }
  return normalized(std::move(g));
}

std::vector<Volume> spheres(std::size_t count, std::size_t edge, std::uint64_t seed) {
  std::vector<Volume> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sphere(edge, seed * 1000003ULL + i));
  return out;
}

Volume texture(std::size_t edge, float mean, float amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(1.0, 4.0), phase(0.0, 2 * std::numbers::pi), sign(-1.0, 1.0);
  std::normal_distribution<double> grain(0.0, 0.15);
  constexpr int kWaves = 6;
  double k[kWaves][3], ph[kWaves];
  for (int w = 0; w < kWaves; ++w) {
    for (auto& c : k[w]) c = sign(rng) * freq(rng) * 2 * std::numbers::pi / static_cast<double>(edge);
    ph[w] = phase(rng);
  }
  Grid3<float> g({edge, edge, edge});
  for (std::size_t z = 0; z < edge; ++z)
    for (std::size_t y = 0; y < edge; ++y)
      for (std::size_t x = 0; x < edge; ++x) {
        double s = 0.0;
        for (int w = 0; w < kWaves; ++w) s += std::cos(k[w][0] * x + k[w][1] * y + k[w][2] * z + ph[w]);
        s = s / std::sqrt(kWaves / 2.0) + grain(rng);
        g(x, y, z) = static_cast<float>(mean + amplitude * 0.5 * s);
      }
  return normalized(std::move(g));
}

Volume constant(std::size_t edge, float value) {
  return Volume(Grid3<float>({edge, edge, edge}, value), {}, IntensitySpace::Normalized);
}

Volume noise(std::size_t edge, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Grid3<float> g({edge, edge, edge});
  for (auto& v : g.values()) v = u(rng);
  return Volume(std::move(g), {}, IntensitySpace::Normalized);
}

Volume lesion(std::size_t edge, float core, float rim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> axis(0.26, 0.34), jitter(-0.04, 0.04);
  std::normal_distribution<double> grain(0.0, 0.03);
  const double n = static_cast<double>(edge);
  const double c[3] = {n * (0.5 + jitter(rng)), n * (0.5 + jitter(rng)), n * (0.5 + jitter(rng))};
  const double a[3] = {n * axis(rng), n * axis(rng), n * axis(rng)};
  Grid3<float> g({edge, edge, edge});
  for (std::size_t z = 0; z < edge; ++z)
    for (std::size_t y = 0; y < edge; ++y)
      for (std::size_t x = 0; x < edge; ++x) {
        const double p[3] = {x + 0.5, y + 0.5, z + 0.5};
        double q = 0.0;
        for (int i = 0; i < 3; ++i) q += (p[i] - c[i]) * (p[i] - c[i]) / (a[i] * a[i]);
        const double r = std::sqrt(q);  // 1 on the ellipsoid surface
        double v = 0.0;
        if (r < 0.85) {
          v = core + grain(rng);
        } else if (r < 1.0) {
          v = rim;
        }
        g(x, y, z) = static_cast<float>(v);
      }
  return normalized(std::move(g));
}

Volume embedded_lesion(std::size_t edge, float tissue_mean, float contrast, double radius, std::uint64_t seed) {
  Grid3<float> g = texture(edge, tissue_mean, 0.1f, seed).grid();
  const double c = (static_cast<double>(edge) - 1.0) / 2.0;
  for (std::size_t z = 0; z < edge; ++z)
    for (std::size_t y = 0; y < edge; ++y)
      for (std::size_t x = 0; x < edge; ++x) {
        const double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c));
        const double w = std::clamp((radius - d) / 2.0, 0.0, 1.0);
        g(x, y, z) = static_cast<float>(g(x, y, z) - contrast * w);
      }
  return normalized(std::move(g));
}

Volume blob_case(std::size_t edge, bool tumor, std::uint64_t seed) {
  Volume base = texture(edge, 0.45f, 0.12f, seed);
  if (!tumor) return base;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const double n = static_cast<double>(edge);
  std::uniform_real_distribution<double> pos(0.3 * n, 0.7 * n), rad(0.12 * n, 0.18 * n);
  const double cx = pos(rng), cy = pos(rng), cz = pos(rng), r = rad(rng);
  Grid3<float> g = base.grid();
  for (std::size_t z = 0; z < edge; ++z)
    for (std::size_t y = 0; y < edge; ++y)
      for (std::size_t x = 0; x < edge; ++x) {
        const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz));
        const double w = 1.0 - smoothstep(r - 1.5, r + 1.5, d);
        g(x, y, z) = static_cast<float>(g(x, y, z) * (1 - w) + 0.95 * w);
      }
  return normalized(std::move(g));
}

}  // namespace pdac::phantom
