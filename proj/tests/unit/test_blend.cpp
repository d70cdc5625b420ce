#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pdac/blend.hpp"
#include "pdac/error.hpp"
#include "pdac/phantom.hpp"
#include "../common/poisson_oracle.hpp"

using namespace pdac;
using namespace pdac::blend;

namespace {

Volume from_fn(std::size_t edge, auto fn) {
  Grid3<float> g({edge, edge, edge});
  for (std::size_t z = 0; z < edge; ++z)
    for (std::size_t y = 0; y < edge; ++y)
      for (std::size_t x = 0; x < edge; ++x) g(x, y, z) = static_cast<float>(fn(x, y, z));
  return Volume(std::move(g), {}, IntensitySpace::Normalized);
}

BlendRequest request(Volume tumor, Volume pancreas, std::optional<Offset3> off = std::nullopt) {
  return {std::move(tumor), std::move(pancreas), off, 0.1f, Method::CopyPaste};
}

double in_mask_variance(const Volume& v, const Mask& m, Offset3 o) {
  double s = 0, s2 = 0, n = 0;
  const auto e = m.extent();
  for (std::size_t z = 0; z < e.nz; ++z)
    for (std::size_t y = 0; y < e.ny; ++y)
      for (std::size_t x = 0; x < e.nx; ++x)
        if (m(x, y, z)) {
          const double val = v(x + o.x, y + o.y, z + o.z);
          s += val;
          s2 += val * val;
          ++n;
        }
  return s2 / n - (s / n) * (s / n);
}

}  // namespace

TEST(TumorMask, ConstantTumorIsFullMask) {
  const auto m = extract_tumor_mask(phantom::constant(8, 0.8f), 0.1f);
  EXPECT_EQ(count_nonzero(m), 512u);
}

TEST(TumorMask, KeepsLargestComponent) {
  // A 5x5x4 = 100 voxel block and a 5-voxel bar, not 6-connected.
  const auto t = from_fn(16, [](auto x, auto y, auto z) {
    if (x < 5 && y < 5 && z < 4) return 0.7;
    if (x >= 10 && x < 15 && y == 12 && z == 12) return 0.9;
    return 0.0;
  });
  const auto m = extract_tumor_mask(t, 0.1f);
  EXPECT_EQ(count_nonzero(m), 100u);
  EXPECT_EQ(m(12, 12, 12), 0);
  EXPECT_EQ(m(0, 0, 0), 1);
}

TEST(TumorMask, DiagonalNeighboursAreSeparate) {
  const auto t = from_fn(4, [](auto x, auto y, auto z) { return (x == y && y == z) ? 0.9 : 0.0; });
  EXPECT_EQ(count_nonzero(extract_tumor_mask(t, 0.1f)), 1u);
}

TEST(TumorMask, AllZeroThrows) {
  try {
    extract_tumor_mask(phantom::constant(8, 0.0f), 0.1f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyMaskResult);
  }
}

TEST(CopyPaste, ReplacesInsideKeepsOutside) {
  const auto t = from_fn(4, [](auto x, auto, auto) { return x < 2 ? 0.8 : 0.0; });
  const auto out = blend_copy_paste(request(t, phantom::constant(8, 0.3f), Offset3{2, 2, 2}));
  EXPECT_FLOAT_EQ(out(2, 2, 2), 0.8f);
  EXPECT_FLOAT_EQ(out(4, 2, 2), 0.3f);
  EXPECT_FLOAT_EQ(out(0, 0, 0), 0.3f);
}

TEST(CopyPaste, SubThresholdRimKeepsPancreas) {
  const auto t = phantom::lesion(16, 0.6f, 0.05f, 3);
  const auto p = phantom::texture(32, 0.5f, 0.1f, 4);
  const auto req = request(t, p);
  const auto out = blend_copy_paste(req);
  const auto mask = extract_tumor_mask(t, 0.1f);
  const Offset3 o = centered_offset(p.extent(), t.extent());
  std::size_t rim = 0;
  for (std::size_t z = 0; z < 16; ++z)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x)
        if (t(x, y, z) == 0.05f) {
          ++rim;
          EXPECT_EQ(mask(x, y, z), 0);
          EXPECT_EQ(out(x + o.x, y + o.y, z + o.z), p(x + o.x, y + o.y, z + o.z));
        }
  EXPECT_GT(rim, 0u);
}

TEST(CopyPaste, Idempotent) {
  const auto t = phantom::lesion(16, 0.6f, 0.05f, 5);
  const auto once = blend_copy_paste(request(t, phantom::texture(32, 0.5f, 0.1f, 6)));
  const auto twice = blend_copy_paste(request(t, once));
  EXPECT_EQ(once.grid(), twice.grid());
}

TEST(CopyPaste, OffsetOutOfBounds) {
  const auto t = phantom::constant(8, 0.8f), p = phantom::constant(16, 0.3f);
  for (Offset3 o : {Offset3{9, 0, 0}, Offset3{0, -1, 0}, Offset3{0, 0, 12}}) {
    try {
      blend_copy_paste(request(t, p, o));
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::OffsetOutOfBounds);
    }
  }
  EXPECT_NO_THROW(blend_copy_paste(request(t, p, Offset3{8, 8, 8})));
}

TEST(Gradient, ConstantIntoConstantIsConstant) {
  const auto out = blend_gradient(request(phantom::constant(8, 0.9f), phantom::constant(16, 0.2f)));
  for (float v : out.values()) EXPECT_NEAR(v, 0.2f, 1e-6);
}

TEST(Gradient, MatchesDenseDirectSolve) {
  for (Solver s : {Solver::ConjugateGradient, Solver::Jacobi}) {
    const auto r = checks::poisson_dense_oracle(s);
    EXPECT_TRUE(r.oracle_in_range);
    EXPECT_EQ(r.unknowns, 27u);
    EXPECT_LE(r.max_abs_error, 1e-5);
  }
}

TEST(Gradient, MaskTouchingFaceUsesFaceValues) {
  const auto p = phantom::texture(16, 0.5f, 0.2f, 8);
  PoissonStats st;
  const auto out = blend_gradient(request(phantom::texture(8, 0.6f, 0.1f, 9), p, Offset3{0, 0, 0}), {}, &st);
  EXPECT_EQ(st.unknowns, 7u * 7u * 7u);
  for (std::size_t a = 0; a < 8; ++a) {
    EXPECT_EQ(out(a, 0, 3), p(a, 0, 3));
    EXPECT_EQ(out(0, a, 5), p(0, a, 5));
  }
  for (float v : out.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Gradient, MaximumPrincipleWithoutSource) {
  const auto p = phantom::texture(24, 0.5f, 0.3f, 10);
  const auto t = phantom::constant(8, 0.9f);
  const Offset3 o{8, 8, 8};
  const auto out = blend_gradient(request(t, p, o));
  float lo = 1, hi = 0;
  for (long z = 7; z <= 16; ++z)
    for (long y = 7; y <= 16; ++y)
      for (long x = 7; x <= 16; ++x) {
        const bool inside = x >= 8 && x < 16 && y >= 8 && y < 16 && z >= 8 && z < 16;
        if (inside) continue;
        lo = std::min(lo, p(x, y, z));
        hi = std::max(hi, p(x, y, z));
      }
  for (long z = 8; z < 16; ++z)
    for (long y = 8; y < 16; ++y)
      for (long x = 8; x < 16; ++x) {
        EXPECT_GE(out(x, y, z), lo - 1e-5f);
        EXPECT_LE(out(x, y, z), hi + 1e-5f);
      }
}

TEST(Gradient, UnconvergedSolveThrows) {
  PoissonSolveConfig cfg;
  cfg.max_iterations = 1;
  cfg.residual_tolerance = 1e-12;
  cfg.solver = Solver::Jacobi;
  try {
    blend_gradient(request(phantom::texture(8, 0.6f, 0.2f, 1), phantom::texture(16, 0.4f, 0.2f, 2)), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SolverDiverged);
  }
}

TEST(AllMethods, OutsideBoundingBoxUntouched) {
  const auto t = phantom::lesion(16, 0.6f, 0.05f, 11);
  const auto p = phantom::texture(32, 0.5f, 0.1f, 12);
  StyleConfig style;
  style.iterations = 5;
  for (Method m : {Method::CopyPaste, Method::Gradient, Method::Style}) {
    auto req = request(t, p);
    req.method = m;
    const auto out = blend::blend(req, {}, style);
    for (std::size_t z = 0; z < 32; ++z)
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const bool box = x >= 8 && x < 24 && y >= 8 && y < 24 && z >= 8 && z < 24;
          if (!box) ASSERT_EQ(out(x, y, z), p(x, y, z)) << method_name(m);
        }
  }
}

TEST(Style, DegenerateSettingsReturnBlendII) {
  const auto req = request(phantom::lesion(16, 0.6f, 0.05f, 13), phantom::texture(32, 0.5f, 0.1f, 14));
  const auto base = blend_gradient(req);
  StyleConfig no_style;
  no_style.w_style = 0.0;
  StyleConfig no_iter;
  no_iter.iterations = 0;
  for (const auto& cfg : {no_style, no_iter}) {
    const auto out = blend_style(req, {}, cfg);
    for (std::size_t i = 0; i < out.grid().size(); ++i) EXPECT_NEAR(out.grid()[i], base.grid()[i], 1e-5);
  }
}

TEST(Style, FlattensTextureTowardConstantBackground) {
  const auto t = phantom::texture(16, 0.6f, 0.3f, 15);
  const auto req = request(t, phantom::constant(32, 0.4f));
  const auto mask = extract_tumor_mask(t, 0.1f);
  const Offset3 o = centered_offset({32, 32, 32}, {16, 16, 16});
  StyleConfig cfg;
  cfg.iterations = 30;
  const double before = in_mask_variance(blend_gradient(req), mask, o);
  const double after = in_mask_variance(blend_style(req, {}, cfg), mask, o);
  EXPECT_LT(after, before);
}

TEST(Rank, SelfReferenceRanksFirst) {
  std::vector<Volume> tumors, pancreases;
  for (std::uint64_t s = 0; s < 3; ++s) {
    tumors.push_back(phantom::lesion(16, 0.6f, 0.05f, s));
    pancreases.push_back(phantom::texture(32, 0.5f, 0.1f, 100 + s));
  }
  const auto one = blend_all(Method::CopyPaste, tumors, pancreases);
  const auto two = blend_all(Method::Gradient, tumors, pancreases);
  const auto r = rank_outputs({{Method::CopyPaste, one}, {Method::Gradient, two}}, two);
  ASSERT_EQ(r.scores.size(), 2u);
  for (std::size_t p = 0; p < 3; ++p) {
    EXPECT_NEAR(r.scores[1].fid[p], 0.0, 1e-6);
    EXPECT_EQ(r.order[p].front(), Method::Gradient);
  }
  EXPECT_THROW(rank_outputs({{Method::CopyPaste, {one[0]}}}, two), Error);
}

TEST(Rank, TableLayout) {
  BlendRanking r;
  r.scores = {{Method::CopyPaste, {1, 2, 3}}, {Method::Gradient, {4, 5, 6}}, {Method::Style, {7, 8, 9}}};
  const auto path = std::filesystem::temp_directory_path() / "pdac_blend_table.csv";
  write_blend_table(r, path);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "Blending Methods,FID-Sag,FID-Ax,FID-Cor");
  EXPECT_EQ(lines[1].rfind("Blend I,", 0), 0u);
  EXPECT_EQ(lines[3].rfind("Blend III,", 0), 0u);
}
