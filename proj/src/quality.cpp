#include "pdac/quality.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include "pdac/batch.hpp"
#include "pdac/error.hpp"

namespace pdac::quality {
namespace {

using nn::Dim3;
using nn::LayerKind;
using nn::LayerSpec;

constexpr std::size_t kEmbedChunk = 4;

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_of(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(m));
  if (es.info() != Eigen::Success) throw Error(ErrorKind::NonConvergentSqrt, "eigendecomposition failed");
  return es;
}

// Eigenvalues within rounding of zero are zeroed before the square root:
// rank-deficient covariances (fewer samples than features) otherwise leak
// sqrt(1e-16)-sized noise from every null direction.
Eigen::VectorXd root_of_spectrum(const Eigen::VectorXd& lambda) {
  const double floor = static_cast<double>(lambda.size()) * std::numeric_limits<double>::epsilon() *
                       std::max(lambda.cwiseAbs().maxCoeff(), 0.0);
  return lambda.unaryExpr([floor](double v) { return v > floor ? std::sqrt(v) : 0.0; });
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  const auto es = eigen_of(m);
  const Eigen::VectorXd root = root_of_spectrum(es.eigenvalues());
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

nn::ModelGraph feature_graph(std::uint64_t seed, nn::TensorShape input, Dim3 kernel, Dim3 pad, Dim3 pool,
                             const std::array<std::size_t, 4>& channels, const std::string& name) {
  nn::ModelGraph g;
  g.name = name;
  g.input = input;
  g.init_seed = seed;
  g.init = nn::InitScheme::HeNormal;
  for (std::size_t b = 0; b < channels.size(); ++b) {
    const std::string tag = "block" + std::to_string(b);
    LayerSpec conv;
    conv.kind = LayerKind::Conv;
    conv.channels = channels[b];
    conv.kernel = kernel;
    conv.pad_lo = pad;
    conv.pad_hi = pad;
    conv.name = tag + ".conv";
    LayerSpec mp;
    mp.kind = LayerKind::MaxPool;
    mp.kernel = pool;
    mp.name = tag + ".pool";
    LayerSpec act;
    act.kind = LayerKind::ReLU;
    act.name = tag + ".relu";
    LayerSpec bn;
    bn.kind = LayerKind::BatchNorm;
    bn.name = tag + ".bn";
    g.layers.insert(g.layers.end(), {conv, mp, act, bn});
  }
  LayerSpec gap;
  gap.kind = LayerKind::GlobalAvgPool;
  gap.name = "pool";
  g.layers.push_back(gap);
  return g;
}

void check_edge(std::size_t edge) {
  if (edge == 0 || edge % 16 != 0) {
    throw Error(ErrorKind::InvalidEdge, "feature network edge " + std::to_string(edge) + " is not divisible by 16");
  }
}

void require_samples(std::size_t n, const char* what) {
  if (n < 2) {
    throw Error(ErrorKind::InsufficientSamples,
                std::string(what) + " needs at least 2 samples, got " + std::to_string(n));
  }
}

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

double mse(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

void check_same_size(const Image2D& a, const Image2D& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorKind::ShapeMismatch, "slice sizes differ: " + std::to_string(a.width) + "x" +
                                              std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                              std::to_string(b.height));
  }
}

void add_result(PsnrResult& r, double value) {
  if (std::isinf(value)) {
    ++r.identical_pairs;
    return;
  }
  r.mean_db += value;
  ++r.finite_pairs;
}

PsnrResult finish(PsnrResult r) {
  if (r.finite_pairs > 0) r.mean_db /= static_cast<double>(r.finite_pairs);
  return r;
}

// ---- MS-SSIM ---------------------------------------------------------------

struct Field {
  std::size_t nx = 0, ny = 0, nz = 0;
  std::vector<double> v;
  std::size_t at(std::size_t x, std::size_t y, std::size_t z) const { return x + nx * (y + ny * z); }
};

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;

const std::array<double, 2 * kSsimRadius + 1>& gauss_taps() {
  static const auto taps = [] {
    std::array<double, 2 * kSsimRadius + 1> t{};
    double sum = 0.0;
    for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
      t[static_cast<std::size_t>(i + kSsimRadius)] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
      sum += t[static_cast<std::size_t>(i + kSsimRadius)];
    }
    for (auto& x : t) x /= sum;
    return t;
  }();
  return taps;
}

/// Separable Gaussian blur with replicate boundary.
Field blur(const Field& f) {
  const auto& taps = gauss_taps();
  Field a = f, b = f;
  auto pass = [&](const Field& src, Field& dst, int axis) {
    const long n[3] = {static_cast<long>(src.nx), static_cast<long>(src.ny), static_cast<long>(src.nz)};
    for (long z = 0; z < n[2]; ++z)
      for (long y = 0; y < n[1]; ++y)
        for (long x = 0; x < n[0]; ++x) {
          double acc = 0.0;
          for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
            long p[3] = {x, y, z};
            p[axis] = std::clamp(p[axis] + k, 0L, n[axis] - 1);
            acc += taps[static_cast<std::size_t>(k + kSsimRadius)] *
                   src.v[src.at(static_cast<std::size_t>(p[0]), static_cast<std::size_t>(p[1]),
                                static_cast<std::size_t>(p[2]))];
          }
          dst.v[dst.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z))] = acc;
        }
  };
  pass(f, a, 0);
  pass(a, b, 1);
  pass(b, a, 2);
  return a;
}

Field downsample(const Field& f) {
  Field o;
  o.nx = f.nx / 2;
  o.ny = f.ny / 2;
  o.nz = f.nz / 2;
  o.v.assign(o.nx * o.ny * o.nz, 0.0);
  for (std::size_t z = 0; z < o.nz; ++z)
    for (std::size_t y = 0; y < o.ny; ++y)
      for (std::size_t x = 0; x < o.nx; ++x) {
        double acc = 0.0;
        for (std::size_t dz = 0; dz < 2; ++dz)
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) acc += f.v[f.at(2 * x + dx, 2 * y + dy, 2 * z + dz)];
        o.v[o.at(x, y, z)] = acc / 8.0;
      }
  return o;
}

Field product(const Field& a, const Field& b) {
  Field o = a;
  for (std::size_t i = 0; i < o.v.size(); ++i) o.v[i] = a.v[i] * b.v[i];
  return o;
}

/// Mean contrast-structure term and mean full SSIM at one scale.
std::pair<double, double> ssim_terms(const Field& a, const Field& b) {
  const Field mu_a = blur(a), mu_b = blur(b);
  const Field aa = blur(product(a, a)), bb = blur(product(b, b)), ab = blur(product(a, b));
  double cs_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = aa.v[i] - ma * ma;
    const double vb = bb.v[i] - mb * mb;
    const double cov = ab.v[i] - ma * mb;
    const double cs = (2.0 * cov + kSsimC2) / (va + vb + kSsimC2);
    const double l = (2.0 * ma * mb + kSsimC1) / (ma * ma + mb * mb + kSsimC1);
    cs_sum += cs;
    ssim_sum += l * cs;
  }
  const double n = static_cast<double>(a.v.size());
  return {cs_sum / n, ssim_sum / n};
}

Field field_of(const Grid3<float>& g) {
  Field f;
  f.nx = g.extent().nx;
  f.ny = g.extent().ny;
  f.nz = g.extent().nz;
  f.v.assign(g.values().begin(), g.values().end());
  return f;
}

void check_cube_set(const std::vector<Volume>& set) {
  for (const auto& v : set) {
    if (v.extent() != set.front().extent()) throw Error(ErrorKind::ShapeMismatch, "volumes differ in extent");
  }
}

}  // namespace

// ---- Fréchet core ------------------------------------------------------------

GaussianSummary summarize(const Eigen::MatrixXd& features) {
  require_samples(static_cast<std::size_t>(features.rows()), "Gaussian summary");
  GaussianSummary s;
  s.n = static_cast<std::size_t>(features.rows());
  s.mu = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mu.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  return s;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mu.size() != b.mu.size() || a.cov.rows() != a.mu.size() || b.cov.rows() != b.mu.size()) {
    throw Error(ErrorKind::DimensionMismatch, "feature dimensions differ: " + std::to_string(a.mu.size()) +
                                                  " vs " + std::to_string(b.mu.size()));
  }
  const Eigen::MatrixXd ca = symmetrized(a.cov);
  const Eigen::MatrixXd cb = symmetrized(b.cov);
  // sqrt(Ca Cb) has the trace of sqrt(Sa Cb Sa) with Sa = sqrt(Ca); the
  // latter is symmetric PSD, so a symmetric eigensolver applies.
  const Eigen::MatrixXd sa = sqrt_psd(ca);
  const auto es = eigen_of(sa * cb * sa);
  const double tr_sqrt = root_of_spectrum(es.eigenvalues()).sum();
  const double d2 = (a.mu - b.mu).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(d2)) throw Error(ErrorKind::NonConvergentSqrt, "non-finite Fréchet distance");
  return std::max(0.0, d2);
}

// ---- feature networks ------------------------------------------------------

FeatureNetwork::FeatureNetwork(nn::ModelGraph graph, std::uint64_t seed)
    : state_(std::make_shared<State>(std::move(graph))), seed_(seed) {
  state_->net.set_frozen(true);
  feature_length_ = state_->net.graph().output_shape().c;
}

Eigen::MatrixXd FeatureNetwork::embed(const nn::Tensor<float>& batch) const {
  const auto& s = batch.shape();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(feature_length_));
  std::lock_guard lock(state_->mu);
  for (std::size_t start = 0; start < s.n; start += kEmbedChunk) {
    const std::size_t count = std::min(kEmbedChunk, s.n - start);
    nn::Tensor<float> chunk(nn::Shape5{count, s.c, s.s});
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(batch.sample(start + i).begin(), batch.sample(start + i).end(), chunk.sample(i).begin());
    }
    const auto& y = state_->net.forward(chunk, nn::Mode::Eval);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t f = 0; f < feature_length_; ++f) {
        out(static_cast<Eigen::Index>(start + i), static_cast<Eigen::Index>(f)) = y.sample(i)[f];
      }
  }
  return out;
}

Eigen::MatrixXd FeatureNetwork::embed(const std::vector<Volume>& volumes) const { return embed(to_batch(volumes)); }

FeatureNetwork build_feature_network(std::uint64_t seed, std::size_t edge) {
  check_edge(edge);
  return FeatureNetwork(feature_graph(seed, {1, Dim3::cube(edge)}, Dim3::cube(3), Dim3::cube(1), Dim3::cube(2),
                                      {8, 16, 32, kFeatureLength}, "feature3d"),
                        seed);
}

FeatureNetwork build_feature_prefix(std::size_t blocks, std::uint64_t seed, std::size_t edge) {
  if (blocks < 1 || blocks > 4 || edge == 0 || edge % (std::size_t{1} << blocks) != 0) {
    throw Error(ErrorKind::InvalidEdge, "edge " + std::to_string(edge) + " cannot feed " + std::to_string(blocks) +
                                            " feature blocks");
  }
  auto g = feature_graph(seed, {1, Dim3::cube(edge)}, Dim3::cube(3), Dim3::cube(1), Dim3::cube(2),
                         {8, 16, 32, kFeatureLength}, "feature3d_prefix");
  g.layers.resize(blocks * kFeatureBlockLayers);
  return FeatureNetwork(std::move(g), seed);
}

FeatureNetwork build_slice_feature_network(std::uint64_t seed, std::size_t edge) {
  check_edge(edge);
  return FeatureNetwork(feature_graph(seed, {1, Dim3{1, edge, edge}}, Dim3{1, 3, 3}, Dim3{0, 1, 1},
                                      Dim3{1, 2, 2}, {16, 32, 64, 128}, "feature2d"),
                        seed);
}

Eigen::MatrixXd embed_slices(const FeatureNetwork& net, const std::vector<Image2D>& slices) {
  if (slices.empty()) throw Error(ErrorKind::InsufficientSamples, "no slices to embed");
  const auto& in = net.graph().input.s;
  nn::Tensor<float> t(nn::Shape5{slices.size(), 1, in});
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (slices[i].width != in.w || slices[i].height != in.h) {
      throw Error(ErrorKind::ShapeMismatch, "slice " + std::to_string(slices[i].width) + "x" +
                                                std::to_string(slices[i].height) + " does not fit extractor " +
                                                nn::to_string(in));
    }
    std::copy(slices[i].pixels.begin(), slices[i].pixels.end(), t.sample(i).begin());
  }
  return net.embed(t);
}

double slice_fid(const std::vector<Volume>& set_a, const std::vector<Volume>& set_b, Plane plane,
                 const FeatureNetwork& extractor) {
  require_samples(set_a.size(), "slice FID (first set)");
  require_samples(set_b.size(), "slice FID (second set)");
  auto slices = [plane](const std::vector<Volume>& set) {
    std::vector<Image2D> out;
    out.reserve(set.size());
    for (const auto& v : set) out.push_back(center_slice(v, plane));
    return out;
  };
  return frechet_distance(summarize(embed_slices(extractor, slices(set_a))),
                          summarize(embed_slices(extractor, slices(set_b))));
}

// ---- PSNR --------------------------------------------------------------------

double psnr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorKind::ShapeMismatch, "PSNR inputs differ in size");
  const double m = mse(a, b);
  return m == 0.0 ? kPsnrIdentical : 10.0 * std::log10(1.0 / m);
}

double psnr(const Image2D& a, const Image2D& b) {
  check_same_size(a, b);
  return psnr(to_double(a.pixels), to_double(b.pixels));
}

PsnrResult slice_psnr(const std::vector<std::pair<Volume, Volume>>& pairs, Plane plane) {
  PsnrResult r;
  for (const auto& [a, b] : pairs) add_result(r, psnr(center_slice(a, plane), center_slice(b, plane)));
  return finish(r);
}

PsnrResult slice_psnr(const std::vector<Volume>& set_a, const std::vector<Volume>& set_b, Plane plane,
                      Pairing pairing) {
  PsnrResult r;
  if (pairing == Pairing::Index) {
    if (set_a.size() != set_b.size()) {
      throw Error(ErrorKind::ShapeMismatch, "index pairing needs equal set sizes (" + std::to_string(set_a.size()) +
                                                " vs " + std::to_string(set_b.size()) + ")");
    }
    for (std::size_t i = 0; i < set_a.size(); ++i) {
      add_result(r, psnr(center_slice(set_a[i], plane), center_slice(set_b[i], plane)));
    }
    return finish(r);
  }
  if (set_b.empty()) throw Error(ErrorKind::ShapeMismatch, "nearest pairing needs a nonempty second set");
  std::vector<std::vector<double>> bs;
  for (const auto& v : set_b) bs.push_back(to_double(center_slice(v, plane).pixels));
  for (const auto& v : set_a) {
    const auto sa = center_slice(v, plane);
    const auto da = to_double(sa.pixels);
    double best = std::numeric_limits<double>::max();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < bs.size(); ++j) {
      check_same_size(sa, center_slice(set_b[j], plane));
      const double m = mse(da, bs[j]);
      if (m < best) {
        best = m;
        best_j = j;
      }
    }
    add_result(r, psnr(da, bs[best_j]));
  }
  return finish(r);
}

// ---- F3D -------------------------------------------------------------------

double f3d(const std::vector<Volume>& batch_a, const std::vector<Volume>& batch_b, const FeatureNetwork& net) {
  require_samples(batch_a.size(), "F3D (first batch)");
  require_samples(batch_b.size(), "F3D (second batch)");
  return frechet_distance(summarize(net.embed(batch_a)), summarize(net.embed(batch_b)));
}

// ---- MMD -----------------------------------------------------------------

double mmd2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const MmdOptions& opt) {
  require_samples(static_cast<std::size_t>(a.rows()), "MMD (first batch)");
  require_samples(static_cast<std::size_t>(b.rows()), "MMD (second batch)");
  if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "MMD batches differ in dimension");
  const Eigen::Index n = a.rows(), m = b.rows(), total = n + m;
  Eigen::MatrixXd z(total, a.cols());
  z << a, b;
  Eigen::MatrixXd d2(total, total);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < total; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < total; ++j) d2(i, j) = (z.row(i) - z.row(j)).squaredNorm();
  }
  for (Eigen::Index i = 0; i < total; ++i)
    for (Eigen::Index j = 0; j < i; ++j) d2(i, j) = d2(j, i);

  double h = 1.0;
  if (opt.bandwidth) {
    h = *opt.bandwidth;
    if (!(h > 0.0)) throw Error(ErrorKind::InvalidConfig, "MMD bandwidth must be positive");
  } else {
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(total * (total - 1) / 2));
    for (Eigen::Index i = 0; i < total; ++i)
      for (Eigen::Index j = i + 1; j < total; ++j) dist.push_back(std::sqrt(d2(i, j)));
    std::sort(dist.begin(), dist.end());
    const std::size_t k = dist.size();
    const double med = k % 2 ? dist[k / 2] : 0.5 * (dist[k / 2 - 1] + dist[k / 2]);
    if (med > 0.0) h = med;
  }
  const double inv = 1.0 / (2.0 * h * h);
  auto kern = [&](Eigen::Index i, Eigen::Index j) { return std::exp(-d2(i, j) * inv); };

  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (opt.biased || i != j) kaa += kern(i, j);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (opt.biased || i != j) kbb += kern(n + i, n + j);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) kab += kern(i, n + j);
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  if (opt.biased) return kaa / (dn * dn) + kbb / (dm * dm) - 2.0 * kab / (dn * dm);
  return kaa / (dn * (dn - 1)) + kbb / (dm * (dm - 1)) - 2.0 * kab / (dn * dm);
}

double mmd2(const std::vector<Volume>& a, const std::vector<Volume>& b, const MmdOptions& opt) {
  auto flatten = [](const std::vector<Volume>& set) {
    const std::size_t d = set.empty() ? 0 : set.front().values().size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set[i].values().size() != d) throw Error(ErrorKind::DimensionMismatch, "volumes differ in voxel count");
      for (std::size_t j = 0; j < d; ++j) {
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = set[i].values()[j];
      }
    }
    return x;
  };
  return mmd2(flatten(a), flatten(b), opt);
}

// ---- MS-SSIM -----------------------------------------------------------------

double ms_ssim(const Grid3<float>& a, const Grid3<float>& b) {
  const auto& e = a.extent();
  if (b.extent() != e) throw Error(ErrorKind::ShapeMismatch, "MS-SSIM inputs differ in extent");
  constexpr std::size_t kMinEdge = std::size_t{1} << kMsSsimWeights.size();
  if (std::min({e.nx, e.ny, e.nz}) < kMinEdge) {
    throw Error(ErrorKind::TooSmallForScales, "MS-SSIM needs an edge of at least " + std::to_string(kMinEdge));
  }
  Field fa = field_of(a), fb = field_of(b);
  double result = 1.0;
  for (std::size_t s = 0; s < kMsSsimWeights.size(); ++s) {
    const auto [cs, ssim] = ssim_terms(fa, fb);
    const bool last = s + 1 == kMsSsimWeights.size();
    result *= std::pow(std::max(0.0, last ? ssim : cs), kMsSsimWeights[s]);
    if (!last) {
      fa = downsample(fa);
      fb = downsample(fb);
    }
  }
  return std::clamp(result, 0.0, 1.0);
}

double ms_ssim_pairwise(const std::vector<Volume>& set) {
  require_samples(set.size(), "MS-SSIM");
  check_cube_set(set);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t j = i + 1; j < set.size(); ++j) pairs.emplace_back(i, j);
  std::vector<double> scores(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(pairs.size()); ++k) {
    const auto [i, j] = pairs[static_cast<std::size_t>(k)];
    scores[static_cast<std::size_t>(k)] = ms_ssim(set[i].grid(), set[j].grid());
  }
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

double ms_ssim_paired(const std::vector<Volume>& set_a, const std::vector<Volume>& set_b) {
  if (set_a.size() != set_b.size()) throw Error(ErrorKind::ShapeMismatch, "paired MS-SSIM needs equal set sizes");
  if (set_a.empty()) throw Error(ErrorKind::InsufficientSamples, "paired MS-SSIM needs at least one pair");
  std::vector<double> scores(set_a.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(set_a.size()); ++k) {
    const auto i = static_cast<std::size_t>(k);
    scores[i] = ms_ssim(set_a[i].grid(), set_b[i].grid());
  }
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

// ---- reports -------------------------------------------------------------------

MetricReport evaluate(const std::vector<Volume>& reference, const std::vector<Volume>& synthesized,
                      const EvaluateOptions& opt) {
  require_samples(reference.size(), "evaluation (reference set)");
  require_samples(synthesized.size(), "evaluation (synthesized set)");
  check_cube_set(reference);
  check_cube_set(synthesized);
  const auto e = reference.front().extent();
  if (!e.is_cube() || synthesized.front().extent() != e) {
    throw Error(ErrorKind::ShapeMismatch, "evaluation needs cubes of one edge in both sets");
  }
  MetricReport r;
  r.count_a = reference.size();
  r.count_b = synthesized.size();
  const auto slice_net = build_slice_feature_network(opt.feature_seed, e.nx);
  const auto volume_net = build_feature_network(opt.feature_seed, e.nx);

  // Index pairing uses the common prefix of both sets.
  const std::size_t paired = std::min(reference.size(), synthesized.size());
  const std::vector<Volume> ref_head(reference.begin(), reference.begin() + static_cast<long>(paired));
  const std::vector<Volume> syn_head(synthesized.begin(), synthesized.begin() + static_cast<long>(paired));
  for (std::size_t p = 0; p < kAllPlanes.size(); ++p) {
    r.fid[p] = slice_fid(reference, synthesized, kAllPlanes[p], slice_net);
    r.psnr[p] = opt.pairing == Pairing::Index ? slice_psnr(syn_head, ref_head, kAllPlanes[p], Pairing::Index)
                                              : slice_psnr(synthesized, reference, kAllPlanes[p], Pairing::Nearest);
  }
  r.f3d = f3d(reference, synthesized, volume_net);
  r.mmd2 = mmd2(reference, synthesized, opt.mmd);
  r.ms_ssim = ms_ssim_paired(ref_head, syn_head);
  r.ms_ssim_diversity = ms_ssim_pairwise(synthesized);
  return r;
}

std::string format_number(double v, int precision) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

namespace {

void write_table(const std::filesystem::path& path, const std::string& header,
                 const std::vector<std::pair<std::string, std::string>>& labels, const std::vector<MetricReport>& reports,
                 const std::function<std::string(const MetricReport&)>& row) {
  if (labels.size() != reports.size()) throw Error(ErrorKind::ShapeMismatch, "one label pair per report");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::WriteFailure, "cannot write " + path.string());
  os << header << "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    os << labels[i].first << "," << labels[i].second << "," << row(reports[i]) << "\n";
  }
  if (!os) throw Error(ErrorKind::WriteFailure, "short write on " + path.string());
}

std::string psnr_cell(const PsnrResult& p) {
  // A set made only of identical pairs has no finite mean.
  return p.finite_pairs == 0 && p.identical_pairs > 0 ? format_number(kPsnrIdentical) : format_number(p.mean_db);
}

}  // namespace

void write_slice_table(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& labels,
                       const std::vector<MetricReport>& reports) {
  write_table(path, "Tissue,Model,FID-Sag,FID-Ax,FID-Cor,PSNR-Sag,PSNR-Ax,PSNR-Cor", labels, reports,
              [](const MetricReport& r) {
                std::string s;
                for (double f : r.fid) s += format_number(f) + ",";
                for (std::size_t p = 0; p < 3; ++p) s += psnr_cell(r.psnr[p]) + (p < 2 ? "," : "");
                return s;
              });
}

void write_volume_table(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, std::string>>& labels,
                        const std::vector<MetricReport>& reports) {
  write_table(path, "Tissue,Model,F3D,MMD2,MS-SSIM,MS-SSIM-Diversity", labels, reports, [](const MetricReport& r) {
    return format_number(r.f3d) + "," + format_number(r.mmd2) + "," + format_number(r.ms_ssim) + "," +
           format_number(r.ms_ssim_diversity);
  });
}

}  // namespace pdac::quality
