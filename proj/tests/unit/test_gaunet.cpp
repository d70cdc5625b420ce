#include <gtest/gtest.h>

#include <cmath>

#include "../common/checks.hpp"
#include "pdac/batch.hpp"
#include "pdac/error.hpp"
#include "pdac/gaunet.hpp"

using namespace pdac;
using namespace pdac::gaunet;

namespace {

void expect_open_unit(const std::vector<Volume>& vs) {
  for (const auto& v : vs)
    for (float x : v.values()) {
      ASSERT_TRUE(std::isfinite(x));
      ASSERT_GE(x, 0.0f);
      ASSERT_LE(x, 1.0f);
    }
}

}  // namespace

TEST(Generator, Edge32KeepsShape) {
  GeneratorConfig cfg;
  nn::Network<float> g(build_generator(cfg));
  const auto out = generate(g, sample_noise(2, 32, 1));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].extent(), (Extent3{32, 32, 32}));
  expect_open_unit(out);
}

TEST(Generator, Edge64KeepsShape) {
  GeneratorConfig cfg;
  cfg.out_edge = 64;
  cfg.depth = 4;
  const auto graph = build_generator(cfg);
  const auto shape = graph.output_shape();
  EXPECT_EQ(shape.c, 1u);
  EXPECT_EQ(shape.s, nn::Dim3::cube(64));
  nn::Network<float> g(graph);
  const auto out = generate(g, sample_noise(1, 64, 2));
  EXPECT_EQ(out[0].extent(), (Extent3{64, 64, 64}));
  expect_open_unit(out);
}

TEST(Generator, RejectsIndivisibleEdge) {
  GeneratorConfig cfg;
  cfg.out_edge = 30;
  EXPECT_THROW(build_generator(cfg), Error);
  try {
    build_generator(cfg);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Generator, DeterministicInference) {
  GeneratorConfig cfg;
  cfg.out_edge = 16;
  cfg.depth = 2;
  nn::Network<float> a(build_generator(cfg)), b(build_generator(cfg));
  const auto z = sample_noise(2, 16, 9);
  const auto va = generate(a, z), vb = generate(b, z);
  EXPECT_EQ(va[0].grid(), vb[0].grid());
  EXPECT_EQ(va[1].grid(), generate(a, z)[1].grid());
}

TEST(Generator, ZeroLatentIsFinite) {
  nn::Network<float> g(build_generator({}));
  nn::Tensor<float> z(nn::Shape5{1, 1, nn::Dim3::cube(32)});
  expect_open_unit(generate(g, z));
}

TEST(Generator, RejectsWrongLatent) {
  nn::Network<float> g(build_generator({}));
  EXPECT_THROW(generate(g, sample_noise(1, 16, 0)), Error);
}

TEST(Discriminator, SpatialTrace32To4) {
  const auto graph = build_discriminator({});
  const auto shapes = graph.infer_shapes();
  std::vector<std::size_t> pooled;
  for (std::size_t i = 0; i < graph.layers.size(); ++i)
    if (graph.layers[i].kind == nn::LayerKind::MaxPool) pooled.push_back(shapes[i].s.w);
  EXPECT_EQ(pooled, (std::vector<std::size_t>{16, 8, 4}));
  EXPECT_EQ(graph.output_shape().c, 1u);
}

TEST(Discriminator, OutputsInOpenUnitInterval) {
  nn::Network<float> d(build_discriminator({}));
  auto x = sample_noise(3, 32, 4);
  for (auto& v : x.values()) v *= 50.0f;
  const auto& p = d.forward(x, nn::Mode::Train);
  for (float v : p.values()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Discriminator, RejectsEdge12) {
  DiscriminatorConfig cfg;
  cfg.in_edge = 12;
  EXPECT_THROW(build_discriminator(cfg), Error);
}

TEST(Discriminator, GradientMatchesFiniteDifferences) {
  const auto r = checks::discriminator_gradient_check(8, 10, 5);
  EXPECT_EQ(r.checked, 10u);
  EXPECT_LE(r.max_rel_error, 1e-3);
}

TEST(GaunetConfig, JsonRoundTrip) {
  GeneratorConfig g;
  g.out_edge = 64;
  g.depth = 4;
  g.base_channels = 8;
  g.init_seed = 7;
  const auto g2 = generator_config_from_json(to_json(g));
  EXPECT_EQ(g2.out_edge, 64u);
  EXPECT_EQ(g2.depth, 4u);
  EXPECT_EQ(g2.base_channels, 8u);
  EXPECT_EQ(g2.init_seed, 7u);
  DiscriminatorConfig d;
  d.block_channels = {2, 4, 8};
  EXPECT_EQ(discriminator_config_from_json(to_json(d)).block_channels, d.block_channels);
}

TEST(GaunetConfig, EqualSeedsGiveEqualParameters) {
  nn::Network<float> a(build_discriminator({})), b(build_discriminator({}));
  auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k)
    EXPECT_TRUE(std::equal(pa[k].value.begin(), pa[k].value.end(), pb[k].value.begin()));
}
