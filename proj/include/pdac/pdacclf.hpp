#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pdac/nn/graph.hpp"
#include "pdac/nn/network.hpp"
#include "pdac/volio.hpp"
#include "pdac/volume.hpp"

namespace pdac::clf {

/// Learnable parameter count stated for the published classifier.
inline constexpr std::size_t kPaperParameterCount = 1'351'873;

struct ClassifierConfig {
  std::size_t in_edge = 64;
  std::array<std::size_t, 4> block_filters{64, 128, 256, 512};
  std::size_t kernel = 3;
  std::size_t dense_units = 512;
  double dropout_rate = 0.5;
  std::size_t batch_size = 8;
  double learning_rate = 1e-4;
  std::size_t folds = 3;
  int epochs = 30;
  bool augment = true;
  std::uint64_t init_seed = 42;
};

/// Throws InvalidConfig.
void validate(const ClassifierConfig& cfg);

/// Four (conv -> max-pool 2 -> ReLU -> batch-norm) blocks, flatten,
/// dense(dense_units), dropout, dense(2), sigmoid. Unit 0 is TUMOR.
nn::ModelGraph build_classifier(const ClassifierConfig& cfg);

/// Volumes with labels, e.g. the TRAIN entries of a manifest.
struct LabeledSet {
  std::vector<Volume> volumes;
  std::vector<volio::Label> labels;
  std::vector<volio::Source> sources;

  std::size_t size() const noexcept { return volumes.size(); }
  void add(Volume v, volio::Label label, volio::Source source = volio::Source::Real);
  std::size_t count(volio::Label label) const;
  std::size_t count(volio::Label label, volio::Source source) const;
};

/// Loads every entry with `role`, enforcing the manifest's shape contract.
LabeledSet load_set(const volio::DatasetManifest& manifest, volio::Role role);

/// Fold id per sample: each class is shuffled with `seed` and dealt round
/// robin, so per-fold class counts differ by at most one. Throws
/// SingleClassDataset, InvalidConfig.
std::vector<std::size_t> stratified_folds(std::span<const volio::Label> labels, std::size_t folds,
                                          std::uint64_t seed);

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_auc = 0.0;  // NaN when the fold holds one class only
};

struct FoldResult {
  std::vector<std::size_t> val_indices;
  std::vector<EpochRecord> curve;
  std::shared_ptr<nn::Network<float>> model;  // weights after the last epoch
  double best_accuracy() const;
};

struct ClassifierGrid {
  std::vector<std::size_t> batch_sizes;
  std::vector<double> learning_rates;
};

/// Batch sizes {8, 12, 16} x learning rates {1e-3, 1e-4, 1e-5}.
ClassifierGrid paper_classifier_grid();

struct GridScore {
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  double mean_val_auc = 0.0;
};

struct ClassifierRun {
  ClassifierConfig config;  // the selected cell when a grid was searched
  std::vector<std::size_t> fold_of;
  std::vector<FoldResult> folds;
  std::vector<GridScore> grid;
};

/// k-fold training with per-unit cross-entropy on one-hot targets and
/// random single-axis rotations. With a grid, every cell is cross-validated
/// and the run of the best mean fold AUC is returned. Throws
/// SingleClassDataset, ShapeMismatch.
ClassifierRun train_classifier(const ClassifierConfig& cfg, const LabeledSet& train, std::uint64_t seed,
                               const ClassifierGrid* grid = nullptr);
ClassifierRun train_classifier(const ClassifierConfig& cfg, const volio::DatasetManifest& manifest,
                               std::uint64_t seed, const ClassifierGrid* grid = nullptr);

/// Tumor probability from one model in inference mode. Throws ShapeMismatch.
double predict(nn::Network<float>& model, const Volume& volume);
std::vector<double> predict(nn::Network<float>& model, const std::vector<Volume>& volumes);
/// Mean tumor probability over the fold models.
std::vector<double> predict(const ClassifierRun& run, const std::vector<Volume>& volumes);

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const noexcept { return tp + tn + fp + fn; }
};

/// 0/0 cells are reported as 0 and flagged.
struct ConfusionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool fpr_degenerate = false;
};

ConfusionMetrics confusion_metrics(const ConfusionCounts& c);

struct ScoredSample {
  double score = 0.0;
  bool tumor = false;
};

/// Scores at or above `threshold` count as TUMOR.
ConfusionCounts confusion_at(std::span<const ScoredSample> scores, double threshold = 0.5);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  double threshold = 0.0;
};

struct Curves {
  std::vector<CurvePoint> roc;  // (FPR, TPR), from (0,0) to (1,1)
  std::vector<CurvePoint> pr;   // (recall, precision), from (0,1)
  double roc_auc = 0.0;
  double pr_auc = 0.0;
};

/// One point per distinct threshold, trapezoidal areas. Throws
/// SingleClassScores.
Curves roc_pr_curves(std::span<const ScoredSample> scores);

std::vector<ScoredSample> scored(std::span<const double> probabilities, std::span<const volio::Label> labels);

/// "x,y,threshold" header renamed per curve, e.g. "fpr,tpr,threshold".
void write_curve_csv(const std::vector<CurvePoint>& points, const std::string& x_name, const std::string& y_name,
                     const std::filesystem::path& path);

struct ConfigCounts {
  std::size_t tumor_real = 0, tumor_synthetic = 0;
  std::size_t healthy_real = 0, healthy_synthetic = 0;
};

ConfigCounts counts_of(const LabeledSet& set);

struct ConfigResult {
  std::string name;
  ConfigCounts counts;
  ClassifierRun run;
  std::vector<ScoredSample> test_scores;
  Curves curves;
  ConfusionMetrics metrics;
};

struct ComparisonReport {
  std::array<ConfigResult, 2> configs;
  std::size_t test_size = 0;
};

/// Trains on each configuration and scores both on the shared test set.
ComparisonReport compare_configs(const LabeledSet& config_i, const LabeledSet& config_ii, const LabeledSet& test,
                                 const ClassifierConfig& cfg, std::uint64_t seed,
                                 const ClassifierGrid* grid = nullptr);

/// comparison.csv, comparison.md, counts.csv and per-config roc/pr point
/// lists under `dir`.
void write_comparison(const ComparisonReport& report, const std::filesystem::path& dir);

/// "139 True + 114 synthesized PDAC" style cell text.
std::string count_cell(std::size_t real, std::size_t synthetic, const std::string& what);

}  // namespace pdac::clf
