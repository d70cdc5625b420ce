#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pdac/gaunet.hpp"
#include "pdac/quality.hpp"
#include "pdac/volume.hpp"

namespace pdac::gantrain {

inline constexpr double kProbEpsilon = 1e-7;

struct GanTrainConfig {
  int epochs = 2000;
  int checkpoint_interval = 20;
  std::size_t batch_size = 8;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  /// Train G on -log D(G(z)) instead of log(1 - D(G(z))).
  bool non_saturating = false;
};

/// Throws InvalidConfig.
void validate(const GanTrainConfig& cfg);

struct CheckpointRecord {
  int epoch = 0;
  std::filesystem::path generator;
  std::filesystem::path discriminator;
};

struct TrainingRun {
  GanTrainConfig config;
  std::vector<double> g_loss_curve;  // per-epoch batch means, epoch 1 first
  std::vector<double> d_loss_curve;
  std::vector<double> d_real_curve;  // mean D(x) on real batches
  std::vector<double> d_fake_curve;  // mean D(G(z)) seen by the D step
  std::vector<CheckpointRecord> checkpoints;
  int selected_epoch = 0;
};

struct GanLosses {
  double g_loss = 0.0;
  double d_loss = 0.0;
};

/// d_loss = -(mean log d_real + mean log(1 - d_fake)); g_loss = mean
/// log(1 - d_fake). Probabilities are clamped to [eps, 1 - eps].
/// Throws EmptyBatch.
GanLosses gan_losses(std::span<const double> d_real, std::span<const double> d_fake);

/// Alternating D / G updates with Adam. Checkpoints (generator and
/// discriminator, each with a JSON sidecar) go to `out_dir` every
/// `checkpoint_interval` epochs. Throws EmptyDataset, ShapeMismatch.
TrainingRun train_gan(const GanTrainConfig& cfg, const std::vector<Volume>& dataset,
                      const gaunet::GeneratorConfig& g_cfg, const gaunet::DiscriminatorConfig& d_cfg,
                      const std::filesystem::path& out_dir);

/// Spike-aware checkpoint choice. A spike starts at the first epoch t >= 2
/// whose g_loss rises above the median of epochs [1, t-1] by
/// (spike_ratio - 1) times that median's magnitude and stays above it for
/// `window` epochs (or until the curve ends). Returns the latest checkpoint
/// before t, the first checkpoint if none precedes t, and the last
/// checkpoint when there is no spike. Throws NoCheckpoints.
int select_checkpoint(const TrainingRun& run, double spike_ratio = 1.5, int window = 3);

/// "epoch,g_loss,d_loss" with round-trip precision.
void write_loss_csv(const TrainingRun& run, const std::filesystem::path& path);

struct GridSpace {
  std::vector<std::size_t> batch_sizes;
  std::vector<double> learning_rates;
};

/// The full search space stated for the generator.
GridSpace paper_grid();

struct GridCell {
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  int selected_epoch = 0;
  double f3d = 0.0;  // +inf when the cell diverged
  bool diverged = false;
  std::filesystem::path dir;
};

struct GridSearchResult {
  GanTrainConfig best;
  std::size_t best_index = 0;
  std::vector<GridCell> cells;
};

/// Trains every (batch size, learning rate) cell for `budget_epochs`, picks
/// each cell's checkpoint with select_checkpoint, synthesizes
/// `held_out.size()` volumes from it and ranks cells by F3D against
/// `held_out`. Throws EmptyDataset, InsufficientSamples.
GridSearchResult grid_search(const GridSpace& space, int budget_epochs, const GanTrainConfig& base,
                             const std::vector<Volume>& train, const std::vector<Volume>& held_out,
                             const gaunet::GeneratorConfig& g_cfg, const gaunet::DiscriminatorConfig& d_cfg,
                             const std::filesystem::path& out_dir);

void write_grid_csv(const GridSearchResult& result, const std::filesystem::path& path);

/// `n` volumes from seeded latent draws through a saved generator.
/// Throws BadCheckpoint.
std::vector<Volume> synthesize(const std::filesystem::path& generator_checkpoint, std::size_t n,
                               std::uint64_t seed);

}  // namespace pdac::gantrain
