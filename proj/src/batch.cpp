#include "pdac/batch.hpp"

#include <algorithm>
#include <random>

#include "pdac/error.hpp"

namespace pdac {

nn::Tensor<float> to_batch(const std::vector<const Volume*>& volumes) {
  if (volumes.empty()) throw Error(ErrorKind::EmptyBatch, "cannot stack an empty batch");
  const auto e = volumes.front()->extent();
  nn::Tensor<float> t(nn::Shape5{volumes.size(), 1, {e.nz, e.ny, e.nx}});
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    if (volumes[i]->extent() != e) throw Error(ErrorKind::ShapeMismatch, "batch volumes differ in extent");
    std::copy(volumes[i]->values().begin(), volumes[i]->values().end(), t.sample(i).begin());
  }
  return t;
}

nn::Tensor<float> to_batch(const std::vector<Volume>& volumes) {
  std::vector<const Volume*> ptrs;
  ptrs.reserve(volumes.size());
  for (const auto& v : volumes) ptrs.push_back(&v);
  return to_batch(ptrs);
}

std::vector<Volume> from_batch(const nn::Tensor<float>& t, IntensitySpace space, Spacing3 spacing) {
  const auto& s = t.shape();
  const Extent3 e{s.s.w, s.s.h, s.s.d};
  std::vector<Volume> out;
  out.reserve(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto src = t.sample(i).first(e.count());
    std::vector<float> data(src.begin(), src.end());
    if (space == IntensitySpace::Normalized) {
      for (auto& v : data) v = std::clamp(v, 0.0f, 1.0f);
    }
    out.emplace_back(Grid3<float>(e, std::move(data)), spacing, space);
  }
  return out;
}

nn::Tensor<float> sample_noise(std::size_t n, std::size_t edge, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  nn::Tensor<float> z(nn::Shape5{n, 1, nn::Dim3::cube(edge)});
  for (auto& v : z.values()) v = static_cast<float>(dist(rng));
  return z;
}

}  // namespace pdac
