#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pdac/batch.hpp"
#include "pdac/error.hpp"
#include "pdac/gantrain.hpp"
#include "pdac/nn/checkpoint.hpp"
#include "pdac/phantom.hpp"

using namespace pdac;
using namespace pdac::gantrain;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pdac_gantrain_" + name);
  fs::remove_all(p);
  return p;
}

gaunet::GeneratorConfig toy_generator() {
  gaunet::GeneratorConfig g;
  g.out_edge = 16;
  g.depth = 2;
  g.base_channels = 8;
  return g;
}

gaunet::DiscriminatorConfig toy_discriminator() {
  gaunet::DiscriminatorConfig d;
  d.in_edge = 16;
  d.block_channels = {2, 4, 8};
  return d;
}

TrainingRun curve_run(std::vector<double> g, int interval = 1) {
  TrainingRun r;
  r.g_loss_curve = std::move(g);
  for (int e = interval; e <= static_cast<int>(r.g_loss_curve.size()); e += interval) r.checkpoints.push_back({e, {}, {}});
  return r;
}

}  // namespace

TEST(GanLosses, WorkedExamples) {
  const std::vector<double> half{0.5};
  EXPECT_NEAR(gan_losses(half, half).g_loss, -0.6931, 1e-4);
  EXPECT_NEAR(gan_losses(half, half).d_loss, 1.3863, 1e-4);
  const std::vector<double> sure_real{1.0 - kProbEpsilon}, sure_fake{kProbEpsilon};
  EXPECT_NEAR(gan_losses(sure_real, sure_fake).d_loss, 0.0, 1e-6);
}

TEST(GanLosses, SignsHoldEverywhere) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(5), f(5);
    for (auto& v : r) v = u(rng);
    for (auto& v : f) v = u(rng);
    f[0] = trial % 2 ? 1.0 : 0.0;  // clamping keeps the logs finite
    const auto l = gan_losses(r, f);
    EXPECT_GE(l.d_loss, 0.0);
    EXPECT_LE(l.g_loss, 0.0);
    EXPECT_TRUE(std::isfinite(l.d_loss));
  }
}

TEST(GanLosses, EmptyBatch) {
  const std::vector<double> none, one{0.5};
  EXPECT_THROW(gan_losses(none, one), Error);
}

TEST(TrainGan, BookkeepingContract) {
  std::vector<Volume> data(8, phantom::constant(16, 0.3f));
  GanTrainConfig cfg;
  cfg.epochs = 4;
  cfg.checkpoint_interval = 2;
  cfg.batch_size = 4;
  const auto dir = scratch("bookkeeping");
  const auto run = train_gan(cfg, data, toy_generator(), toy_discriminator(), dir);
  EXPECT_EQ(run.g_loss_curve.size(), 4u);
  EXPECT_EQ(run.d_loss_curve.size(), 4u);
  ASSERT_EQ(run.checkpoints.size(), 2u);
  EXPECT_EQ(run.checkpoints[0].epoch, 2);
  EXPECT_EQ(run.checkpoints[1].epoch, 4);
  for (const auto& c : run.checkpoints) {
    EXPECT_TRUE(fs::exists(c.generator));
    EXPECT_TRUE(fs::exists(nn::checkpoint_sidecar(c.discriminator)));
  }
  EXPECT_TRUE(run.selected_epoch == 2 || run.selected_epoch == 4);

  const auto csv = dir / "loss.csv";
  write_loss_csv(run, csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,g_loss,d_loss");
}

TEST(TrainGan, SameSeedSameCurves) {
  const auto data = phantom::spheres(6, 16, 2);
  GanTrainConfig cfg;
  cfg.epochs = 2;
  cfg.checkpoint_interval = 2;
  cfg.batch_size = 3;
  cfg.seed = 11;
  const auto a = train_gan(cfg, data, toy_generator(), toy_discriminator(), scratch("det_a"));
  const auto b = train_gan(cfg, data, toy_generator(), toy_discriminator(), scratch("det_b"));
  EXPECT_EQ(a.g_loss_curve, b.g_loss_curve);
  EXPECT_EQ(a.d_loss_curve, b.d_loss_curve);
}

TEST(TrainGan, Errors) {
  GanTrainConfig cfg;
  cfg.epochs = 2;
  cfg.checkpoint_interval = 1;
  EXPECT_THROW(train_gan(cfg, {}, toy_generator(), toy_discriminator(), scratch("empty")), Error);
  EXPECT_THROW(train_gan(cfg, {phantom::constant(8, 0.f)}, toy_generator(), toy_discriminator(), scratch("shape")),
               Error);
  cfg.checkpoint_interval = 3;
  EXPECT_THROW(validate(cfg), Error);
}

TEST(TrainGan, DiscriminatorStepLowersLoss) {
  nn::Network<float> g(gaunet::build_generator(toy_generator()));
  nn::Network<float> d(gaunet::build_discriminator(toy_discriminator()));
  nn::Adam<float> opt(1e-4);
  const auto real = to_batch(phantom::spheres(4, 16, 5));
  const auto fake = g.forward(sample_noise(4, 16, 6), nn::Mode::Train);
  auto loss = [&](bool step) {
    d.zero_grad();
    std::vector<double> pr, pf;
    for (int pass = 0; pass < 2; ++pass) {
      const auto& p = d.forward(pass ? fake : real, nn::Mode::Train);
      nn::Tensor<float> dp(p.shape());
      for (std::size_t i = 0; i < p.size(); ++i) {
        (pass ? pf : pr).push_back(p[i]);
        dp[i] = static_cast<float>(pass ? 1.0 / ((1.0 - p[i]) * 4) : -1.0 / (p[i] * 4));
      }
      d.backward(dp);
    }
    if (step) opt.step(d);
    return gan_losses(pr, pf).d_loss;
  };
  const double before = loss(true);
  EXPECT_LT(loss(false), before);
}

TEST(SelectCheckpoint, SpikeExample) {
  EXPECT_EQ(select_checkpoint(curve_run({1.0, 0.9, 0.8, 0.85, 3.0})), 4);
}

TEST(SelectCheckpoint, MonotoneReturnsLast) {
  EXPECT_EQ(select_checkpoint(curve_run({5, 4, 3, 2, 1, 0.5}, 2)), 6);
}

TEST(SelectCheckpoint, NoCheckpoints) {
  TrainingRun r;
  r.g_loss_curve = {1.0, 2.0};
  try {
    select_checkpoint(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoCheckpoints);
  }
}

TEST(SelectCheckpoint, SingleEpochBlipIgnored) {
  // One noisy epoch is not a spike; the sustained rise at epoch 7 is.
  EXPECT_EQ(select_checkpoint(curve_run({1.0, 1.0, 4.0, 1.0, 1.0, 1.0, 5, 5, 5, 5})), 6);
}

TEST(SelectCheckpoint, NegativeSaturatingLosses) {
  // Saturating g_loss is log(1 - D(G(z))) <= 0; a rise toward 0 is a spike.
  EXPECT_EQ(select_checkpoint(curve_run({-2.0, -2.1, -2.2, -2.0, -0.1, -0.05, -0.02})), 4);
}

TEST(SelectCheckpoint, NeverAfterSpikeOnset) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> g(40);
    for (auto& v : g) v = u(rng);
    const int onset = 5 + trial % 30;
    for (std::size_t i = onset - 1; i < g.size(); ++i) g[i] = 10.0 + u(rng);
    EXPECT_LT(select_checkpoint(curve_run(g, 2)), onset);
  }
}

TEST(GridSearch, PaperGridHasTwentyCells) {
  const auto grid = paper_grid();
  EXPECT_EQ(grid.batch_sizes.size() * grid.learning_rates.size(), 20u);
}

TEST(GridSearch, SingleCellAndDivergingCell) {
  const auto train = phantom::spheres(8, 16, 21), held = phantom::spheres(4, 16, 22);
  GanTrainConfig base;
  base.epochs = 6;
  base.checkpoint_interval = 3;
  base.seed = 4;

  const auto single = grid_search({{4}, {1e-4}}, 6, base, train, held, toy_generator(), toy_discriminator(),
                                  scratch("grid_single"));
  ASSERT_EQ(single.cells.size(), 1u);
  EXPECT_EQ(single.best.batch_size, 4u);
  EXPECT_DOUBLE_EQ(single.best.learning_rate, 1e-4);

  const auto pair = grid_search({{4}, {1e-1, 1e-4}}, 6, base, train, held, toy_generator(), toy_discriminator(),
                                scratch("grid_pair"));
  ASSERT_EQ(pair.cells.size(), 2u);
  EXPECT_DOUBLE_EQ(pair.best.learning_rate, 1e-4);
  EXPECT_LT(pair.cells[1].f3d, pair.cells[0].f3d);
  const auto csv_dir = scratch("grid_csv");
  fs::create_directories(csv_dir);
  write_grid_csv(pair, csv_dir / "grid.csv");
}

TEST(Synthesize, CountsDeterminismAndKind) {
  std::vector<Volume> data(4, phantom::constant(16, 0.5f));
  GanTrainConfig cfg;
  cfg.epochs = 1;
  cfg.checkpoint_interval = 1;
  cfg.batch_size = 4;
  const auto run = train_gan(cfg, data, toy_generator(), toy_discriminator(), scratch("synth"));
  const auto& ck = run.checkpoints.front();
  EXPECT_TRUE(synthesize(ck.generator, 0, 1).empty());
  const auto a = synthesize(ck.generator, 3, 8), b = synthesize(ck.generator, 3, 8);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].extent(), (Extent3{16, 16, 16}));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].grid(), b[i].grid());
  EXPECT_THROW(synthesize(ck.discriminator, 1, 1), Error);
  EXPECT_THROW(synthesize(ck.generator.parent_path() / "missing.bin", 1, 1), Error);
}
