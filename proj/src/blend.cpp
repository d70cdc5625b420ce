#include "pdac/blend.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>

#include "pdac/error.hpp"

namespace pdac::blend {
namespace {

constexpr long kSteps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
constexpr double kCharbonnierEps = 1e-3;

struct Placement {
  Offset3 offset;
  Extent3 tumor;
  Extent3 pancreas;
};

Placement place(const BlendRequest& req) {
  const Extent3 t = req.tumor.extent(), p = req.pancreas.extent();
  const Offset3 o = req.insert_offset.value_or(centered_offset(p, t));
  const long lo[3] = {o.x, o.y, o.z};
  const std::size_t tn[3] = {t.nx, t.ny, t.nz}, pn[3] = {p.nx, p.ny, p.nz};
  for (int a = 0; a < 3; ++a) {
    if (lo[a] < 0 || static_cast<std::size_t>(lo[a]) + tn[a] > pn[a]) {
      throw Error(ErrorKind::OffsetOutOfBounds, "tumor at offset (" + std::to_string(o.x) + ", " +
                                                    std::to_string(o.y) + ", " + std::to_string(o.z) +
                                                    ") does not fit inside the pancreas");
    }
  }
  if (!(req.mask_threshold > 0.0f && req.mask_threshold < 1.0f)) {
    throw Error(ErrorKind::InvalidConfig, "mask threshold must lie in (0, 1)");
  }
  return {o, t, p};
}

Volume with_grid(const Volume& like, Grid3<float> g) {
  for (auto& v : g.values()) v = std::clamp(v, 0.0f, 1.0f);
  return Volume(std::move(g), like.spacing(), IntensitySpace::Normalized);
}

/// Sparse 6-neighbour system over the in-mask voxels that are not on a
/// pancreas face: 6 u_p - sum_{q in omega} u_q = rhs_p.
struct PoissonSystem {
  std::vector<std::size_t> cell;            // pancreas flat index per unknown
  std::vector<std::array<long, 6>> nbr;     // unknown index or -1
  std::vector<double> rhs;
  std::vector<double> guide;                // Laplacian of the tumor per unknown
  std::vector<double> fixed_sum;            // sum of fixed neighbour values

  std::size_t size() const noexcept { return cell.size(); }

  void apply(const std::vector<double>& u, std::vector<double>& out) const {
    out.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      double s = 6.0 * u[i];
      for (long j : nbr[i])
        if (j >= 0) s -= u[static_cast<std::size_t>(j)];
      out[i] = s;
    }
  }

  double max_residual(const std::vector<double>& u) const {
    std::vector<double> au;
    apply(u, au);
    double worst = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, std::abs(rhs[i] - au[i]));
    return worst;
  }
};

PoissonSystem build_system(const BlendRequest& req, const Placement& pl, const Mask& mask) {
  const auto& tg = req.tumor.grid();
  const auto& pg = req.pancreas.grid();
  const Extent3 t = pl.tumor, p = pl.pancreas;
  auto on_face = [&](long x, long y, long z) {
    return x == 0 || y == 0 || z == 0 || x + 1 == static_cast<long>(p.nx) || y + 1 == static_cast<long>(p.ny) ||
           z + 1 == static_cast<long>(p.nz);
  };
  auto tumor_at = [&](long x, long y, long z) {
    x = std::clamp(x, 0L, static_cast<long>(t.nx) - 1);
    y = std::clamp(y, 0L, static_cast<long>(t.ny) - 1);
    z = std::clamp(z, 0L, static_cast<long>(t.nz) - 1);
    return static_cast<double>(tg(x, y, z));
  };

  Grid3<long> index(p, -1);
  PoissonSystem sys;
  for (std::size_t z = 0; z < t.nz; ++z)
    for (std::size_t y = 0; y < t.ny; ++y)
      for (std::size_t x = 0; x < t.nx; ++x) {
        if (!mask(x, y, z)) continue;
        const long px = static_cast<long>(x) + pl.offset.x, py = static_cast<long>(y) + pl.offset.y,
                   pz = static_cast<long>(z) + pl.offset.z;
        if (on_face(px, py, pz)) continue;
        index(px, py, pz) = static_cast<long>(sys.cell.size());
        sys.cell.push_back(pg.index(px, py, pz));
      }
  const std::size_t n = sys.cell.size();
  sys.nbr.resize(n);
  sys.rhs.resize(n);
  sys.guide.resize(n);
  sys.fixed_sum.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = sys.cell[i];
    const long px = static_cast<long>(c % p.nx), py = static_cast<long>((c / p.nx) % p.ny),
               pz = static_cast<long>(c / (p.nx * p.ny));
    const long tx = px - pl.offset.x, ty = py - pl.offset.y, tz = pz - pl.offset.z;
    const double centre = tumor_at(tx, ty, tz);
    double guide = 0.0, fixed = 0.0;
    for (int k = 0; k < 6; ++k) {
      const long qx = px + kSteps[k][0], qy = py + kSteps[k][1], qz = pz + kSteps[k][2];
      guide += tumor_at(tx + kSteps[k][0], ty + kSteps[k][1], tz + kSteps[k][2]) - centre;
      const long j = index(qx, qy, qz);
      sys.nbr[i][k] = j;
      if (j < 0) fixed += pg(qx, qy, qz);
    }
    sys.guide[i] = guide;
    sys.fixed_sum[i] = fixed;
    sys.rhs[i] = fixed - guide;
  }
  return sys;
}

void solve_cg(const PoissonSystem& sys, std::vector<double>& u, const PoissonSolveConfig& cfg, PoissonStats& st) {
  const std::size_t n = sys.size();
  std::vector<double> r(n), p(n), ap(n);
  sys.apply(u, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = sys.rhs[i] - ap[i];
  p = r;
  double rr = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
  auto max_abs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  int it = 0;
  while (it < cfg.max_iterations && max_abs(r) > cfg.residual_tolerance) {
    sys.apply(p, ap);
    const double pap = std::inner_product(p.begin(), p.end(), ap.begin(), 0.0);
    if (!(pap > 0.0) || !std::isfinite(pap)) break;
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_next = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    ++it;
  }
  st.iterations = it;
}

void solve_jacobi(const PoissonSystem& sys, std::vector<double>& u, const PoissonSolveConfig& cfg,
                  PoissonStats& st) {
  const std::size_t n = sys.size();
  std::vector<double> next(n);
  int it = 0;
  // The residual is checked every few sweeps; each check costs one sweep.
  constexpr int kCheckEvery = 8;
  while (it < cfg.max_iterations) {
    if (it % kCheckEvery == 0 && sys.max_residual(u) <= cfg.residual_tolerance) break;
    for (std::size_t i = 0; i < n; ++i) {
      double s = sys.rhs[i];
      for (long j : sys.nbr[i])
        if (j >= 0) s += u[static_cast<std::size_t>(j)];
      next[i] = s / 6.0;
    }
    u.swap(next);
    ++it;
  }
  st.iterations = it;
}

/// Solves the Poisson system, returning the unknowns.
std::vector<double> solve_poisson(const PoissonSystem& sys, const Volume& pancreas, const PoissonSolveConfig& cfg,
                                  PoissonStats& st) {
  validate(cfg);
  const auto& pg = pancreas.grid();
  std::vector<double> u(sys.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = pg[sys.cell[i]];
  st.unknowns = sys.size();
  if (sys.size() > 0) {
    if (cfg.solver == Solver::ConjugateGradient) {
      solve_cg(sys, u, cfg, st);
    } else {
      solve_jacobi(sys, u, cfg, st);
    }
  }
  st.residual = sys.size() ? sys.max_residual(u) : 0.0;
  if (!std::isfinite(st.residual) || st.residual > cfg.residual_tolerance) {
    throw Error(ErrorKind::SolverDiverged, "Poisson residual " + std::to_string(st.residual) + " above tolerance " +
                                               std::to_string(cfg.residual_tolerance) + " after " +
                                               std::to_string(st.iterations) + " iterations");
  }
  return u;
}

/// sum_ij (G - target)^2 with G = F F^T / (C N) over one sample, and its
/// gradient with respect to F.
double gram_loss(const nn::Tensor<float>& a, const Eigen::MatrixXd& target, nn::Tensor<float>* grad) {
  const std::size_t c = a.shape().c, sp = a.shape().s.volume();
  Eigen::MatrixXd f(c, sp);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t k = 0; k < sp; ++k) f(ch, k) = a[ch * sp + k];
  const double norm = static_cast<double>(c * sp);
  const Eigen::MatrixXd diff = f * f.transpose() / norm - target;
  if (grad) {
    const Eigen::MatrixXd df = 4.0 * diff * f / norm;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < sp; ++k) (*grad)[ch * sp + k] = static_cast<float>(df(ch, k));
  }
  return diff.squaredNorm();
}

Eigen::MatrixXd gram(const nn::Tensor<float>& a) {
  const std::size_t c = a.shape().c, sp = a.shape().s.volume();
  Eigen::MatrixXd f(c, sp);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t k = 0; k < sp; ++k) f(ch, k) = a[ch * sp + k];
  return f * f.transpose() / static_cast<double>(c * sp);
}

nn::Tensor<float> as_tensor(const Grid3<float>& g) {
  const Extent3 e = g.extent();
  nn::Tensor<float> t(nn::Shape5{1, 1, nn::Dim3{e.nz, e.ny, e.nx}});
  std::copy(g.values().begin(), g.values().end(), t.values().begin());
  return t;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::CopyPaste: return "Blend I";
    case Method::Gradient: return "Blend II";
    case Method::Style: return "Blend III";
  }
  return "Blend ?";
}

void validate(const PoissonSolveConfig& cfg) {
  if (cfg.max_iterations < 1) throw Error(ErrorKind::InvalidConfig, "Poisson max_iterations must be at least 1");
  if (!(cfg.residual_tolerance > 0.0)) throw Error(ErrorKind::InvalidConfig, "Poisson tolerance must be positive");
}

void validate(const StyleConfig& cfg) {
  if (cfg.iterations < 0) throw Error(ErrorKind::InvalidConfig, "style iterations must be non-negative");
  if (!(cfg.step_size > 0.0)) throw Error(ErrorKind::InvalidConfig, "style step size must be positive");
  if (cfg.w_grad < 0 || cfg.w_style < 0 || cfg.w_tv < 0) {
    throw Error(ErrorKind::InvalidConfig, "style weights must be non-negative");
  }
  if (cfg.feature_blocks < 1 || cfg.feature_blocks > 4) {
    throw Error(ErrorKind::InvalidConfig, "style feature blocks must be in [1, 4]");
  }
}

Offset3 centered_offset(const Extent3& outer, const Extent3& inner) {
  auto half = [](std::size_t o, std::size_t i) { return (static_cast<long>(o) - static_cast<long>(i)) / 2; };
  return {half(outer.nx, inner.nx), half(outer.ny, inner.ny), half(outer.nz, inner.nz)};
}

Mask extract_tumor_mask(const Volume& tumor, float threshold) {
  const auto& g = tumor.grid();
  const Extent3 e = g.extent();
  std::vector<int> label(g.size(), 0);
  std::size_t best_size = 0;
  int best_label = 0, next_label = 0;
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < g.size(); ++seed) {
    if (label[seed] != 0 || !(g[seed] > threshold)) continue;
    const int id = ++next_label;
    label[seed] = id;
    queue.push_back(seed);
    std::size_t size = 0;
    while (!queue.empty()) {
      const std::size_t c = queue.front();
      queue.pop_front();
      ++size;
      const long x = static_cast<long>(c % e.nx), y = static_cast<long>((c / e.nx) % e.ny),
                 z = static_cast<long>(c / (e.nx * e.ny));
      for (const auto& s : kSteps) {
        const long qx = x + s[0], qy = y + s[1], qz = z + s[2];
        if (!g.in_bounds(qx, qy, qz)) continue;
        const std::size_t q = g.index(qx, qy, qz);
        if (label[q] == 0 && g[q] > threshold) {
          label[q] = id;
          queue.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best_label = id;
    }
  }
  if (best_size == 0) throw Error(ErrorKind::EmptyMaskResult, "no tumor voxel above the mask threshold");
  Mask m(e, 0);
  for (std::size_t i = 0; i < g.size(); ++i) m[i] = label[i] == best_label ? 1 : 0;
  return m;
}

Volume blend_copy_paste(const BlendRequest& req) {
  const Placement pl = place(req);
  const Mask mask = extract_tumor_mask(req.tumor, req.mask_threshold);
  Grid3<float> out = req.pancreas.grid();
  const auto& tg = req.tumor.grid();
  for (std::size_t z = 0; z < pl.tumor.nz; ++z)
    for (std::size_t y = 0; y < pl.tumor.ny; ++y)
      for (std::size_t x = 0; x < pl.tumor.nx; ++x)
        if (mask(x, y, z)) out(x + pl.offset.x, y + pl.offset.y, z + pl.offset.z) = tg(x, y, z);
  return with_grid(req.pancreas, std::move(out));
}

Volume blend_gradient(const BlendRequest& req, const PoissonSolveConfig& solve, PoissonStats* stats) {
  const Placement pl = place(req);
  const Mask mask = extract_tumor_mask(req.tumor, req.mask_threshold);
  const PoissonSystem sys = build_system(req, pl, mask);
  PoissonStats st;
  const auto u = solve_poisson(sys, req.pancreas, solve, st);
  if (stats) *stats = st;
  Grid3<float> out = req.pancreas.grid();
  for (std::size_t i = 0; i < u.size(); ++i) out[sys.cell[i]] = static_cast<float>(u[i]);
  return with_grid(req.pancreas, std::move(out));
}

Volume blend_style(const BlendRequest& req, const PoissonSolveConfig& solve, const StyleConfig& style) {
  validate(style);
  const Placement pl = place(req);
  const Mask mask = extract_tumor_mask(req.tumor, req.mask_threshold);
  const PoissonSystem sys = build_system(req, pl, mask);
  PoissonStats st;
  std::vector<double> u = solve_poisson(sys, req.pancreas, solve, st);
  Grid3<float> out = req.pancreas.grid();
  auto write_back = [&] {
    for (std::size_t i = 0; i < u.size(); ++i) out[sys.cell[i]] = static_cast<float>(u[i]);
  };
  write_back();
  if (style.w_style == 0.0 || style.iterations == 0 || sys.size() == 0) return with_grid(req.pancreas, std::move(out));

  const Extent3 t = pl.tumor, p = pl.pancreas;
  if (!t.is_cube() || !p.is_cube()) throw Error(ErrorKind::NonCubeInput, "style blending needs cubic volumes");
  const auto box_net = quality::build_feature_prefix(style.feature_blocks, style.feature_seed, t.nx);
  const auto bg_net = quality::build_feature_prefix(style.feature_blocks, style.feature_seed, p.nx);
  std::vector<std::size_t> taps;
  for (std::size_t b = 1; b <= style.feature_blocks; ++b) taps.push_back(b * quality::kFeatureBlockLayers - 1);

  // Style targets from the whole pancreas.
  std::vector<Eigen::MatrixXd> targets(taps.size());
  {
    nn::Tensor<float> unused;
    bg_net.taps_with_gradient(
        as_tensor(req.pancreas.grid()), taps,
        [&](std::size_t k, const nn::Tensor<float>& a, nn::Tensor<float>&) { targets[k] = gram(a); }, unused);
  }

  // Local index of every unknown inside the insert box.
  std::vector<std::size_t> box_index(u.size());
  Grid3<float> box(t);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const std::size_t c = sys.cell[i];
    const std::size_t x = c % p.nx - pl.offset.x, y = (c / p.nx) % p.ny - pl.offset.y,
                      z = c / (p.nx * p.ny) - pl.offset.z;
    box_index[i] = box.index(x, y, z);
  }

  const double n = static_cast<double>(u.size());
  std::vector<double> grad(u.size()), m(u.size(), 0.0), v(u.size(), 0.0), au, r(u.size());
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int it = 1; it <= style.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);

    // Poisson residual: mean (A u - rhs)^2, gradient 2 A r / n.
    if (style.w_grad > 0) {
      sys.apply(u, au);
      for (std::size_t i = 0; i < u.size(); ++i) r[i] = au[i] - sys.rhs[i];
      std::vector<double> ar;
      sys.apply(r, ar);
      for (std::size_t i = 0; i < u.size(); ++i) grad[i] += style.w_grad * 2.0 * ar[i] / n;
    }

    // Charbonnier total variation over forward differences touching the mask.
    if (style.w_tv > 0) {
      for (std::size_t i = 0; i < u.size(); ++i) {
        const std::size_t c = sys.cell[i];
        for (int k = 0; k < 6; k += 2) {
          const long j = sys.nbr[i][k];
          const std::size_t q = c + (k == 0 ? 1 : k == 2 ? p.nx : p.nx * p.ny);
          const double d = (j >= 0 ? u[static_cast<std::size_t>(j)] : out[q]) - u[i];
          const double g = style.w_tv * d / std::sqrt(d * d + kCharbonnierEps * kCharbonnierEps) / n;
          grad[i] -= g;
          if (j >= 0) grad[static_cast<std::size_t>(j)] += g;
        }
        // Backward difference to a fixed neighbour; unknown neighbours were
        // handled as their own forward difference.
        for (int k = 1; k < 6; k += 2) {
          if (sys.nbr[i][k] >= 0) continue;
          const std::size_t q = c - (k == 1 ? 1 : k == 3 ? p.nx : p.nx * p.ny);
          const double d = u[i] - out[q];
          grad[i] += style.w_tv * d / std::sqrt(d * d + kCharbonnierEps * kCharbonnierEps) / n;
        }
      }
    }

    // Gram distance between the insert box and the pancreas background.
    for (std::size_t z = 0; z < t.nz; ++z)
      for (std::size_t y = 0; y < t.ny; ++y)
        for (std::size_t x = 0; x < t.nx; ++x) box(x, y, z) = out(x + pl.offset.x, y + pl.offset.y, z + pl.offset.z);
    nn::Tensor<float> dbox;
    box_net.taps_with_gradient(
        as_tensor(box), taps,
        [&](std::size_t k, const nn::Tensor<float>& a, nn::Tensor<float>& da) { gram_loss(a, targets[k], &da); },
        dbox);
    for (std::size_t i = 0; i < u.size(); ++i) grad[i] += style.w_style * dbox[box_index[i]];

    const double c1 = 1.0 - std::pow(b1, it), c2 = 1.0 - std::pow(b2, it);
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!std::isfinite(grad[i])) throw Error(ErrorKind::SolverDiverged, "non-finite style gradient");
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      u[i] = std::clamp(u[i] - style.step_size * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps), 0.0, 1.0);
    }
    write_back();
  }
  return with_grid(req.pancreas, std::move(out));
}

Volume blend(const BlendRequest& req, const PoissonSolveConfig& solve, const StyleConfig& style) {
  switch (req.method) {
    case Method::CopyPaste: return blend_copy_paste(req);
    case Method::Gradient: return blend_gradient(req, solve);
    case Method::Style: return blend_style(req, solve, style);
  }
  throw Error(ErrorKind::InvalidConfig, "unknown blend method");
}

std::vector<Volume> blend_all(Method method, const std::vector<Volume>& tumors, const std::vector<Volume>& pancreases,
                              const PoissonSolveConfig& solve, const StyleConfig& style, float mask_threshold) {
  if (tumors.size() != pancreases.size()) {
    throw Error(ErrorKind::ShapeMismatch, std::to_string(tumors.size()) + " tumors for " +
                                              std::to_string(pancreases.size()) + " pancreas volumes");
  }
  std::vector<Volume> out(tumors.size());
  // Requests are independent; each solve runs on one thread.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < tumors.size(); ++i) {
    BlendRequest req{tumors[i], pancreases[i], std::nullopt, mask_threshold, method};
    out[i] = blend(req, solve, style);
  }
  return out;
}

BlendRanking rank_outputs(const std::vector<std::pair<Method, std::vector<Volume>>>& outputs,
                          const std::vector<Volume>& reference, std::uint64_t feature_seed) {
  if (reference.size() < 2) throw Error(ErrorKind::InsufficientSamples, "ranking needs at least two references");
  const auto net = quality::build_slice_feature_network(feature_seed, reference.front().extent().nx);
  BlendRanking r;
  for (const auto& [method, vols] : outputs) {
    if (vols.size() < 2) {
      throw Error(ErrorKind::InsufficientSamples, method_name(method) + " has fewer than two blended volumes");
    }
    MethodScore s{method, {}};
    for (std::size_t p = 0; p < 3; ++p) s.fid[p] = quality::slice_fid(vols, reference, kAllPlanes[p], net);
    r.scores.push_back(s);
  }
  for (std::size_t p = 0; p < 3; ++p) {
    std::vector<std::size_t> idx(r.scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return r.scores[a].fid[p] < r.scores[b].fid[p]; });
    for (auto i : idx) r.order[p].push_back(r.scores[i].method);
  }
  return r;
}

BlendRanking rank_blends(const std::vector<Volume>& tumors, const std::vector<Volume>& pancreases,
                         const std::vector<Volume>& reference, const PoissonSolveConfig& solve,
                         const StyleConfig& style) {
  if (tumors.size() < 2) throw Error(ErrorKind::InsufficientSamples, "ranking needs at least two blends per method");
  std::vector<std::pair<Method, std::vector<Volume>>> outputs;
  for (Method m : {Method::CopyPaste, Method::Gradient, Method::Style})
    outputs.emplace_back(m, blend_all(m, tumors, pancreases, solve, style));
  return rank_outputs(outputs, reference);
}

void write_blend_table(const BlendRanking& ranking, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::WriteFailure, "cannot write " + path.string());
  os << "Blending Methods,FID-Sag,FID-Ax,FID-Cor\n";
  for (const auto& s : ranking.scores) {
    os << method_name(s.method);
    for (double f : s.fid) os << ',' << quality::format_number(f);
    os << '\n';
  }
  if (!os) throw Error(ErrorKind::WriteFailure, "short write to " + path.string());
}

}  // namespace pdac::blend
