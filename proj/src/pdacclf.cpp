#include "pdac/pdacclf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "pdac/batch.hpp"
#include "pdac/error.hpp"
#include "pdac/preprocess.hpp"

namespace pdac::clf {
namespace {

using nn::LayerKind;
using nn::LayerSpec;
using volio::Label;
using volio::Source;

constexpr double kProbFloor = 1e-7;

LayerSpec layer(LayerKind kind, std::size_t channels = 0, double rate = 0.0) {
  LayerSpec l;
  l.kind = kind;
  l.channels = channels;
  l.rate = rate;
  return l;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 step over the combined key
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Mean per-unit binary cross-entropy against one-hot targets, and its
/// gradient with respect to the sigmoid outputs.
double bce(const nn::Tensor<float>& p, const std::vector<Label>& labels, nn::Tensor<float>* grad) {
  const std::size_t n = p.shape().n;
  double loss = 0.0;
  const double norm = static_cast<double>(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double target[2] = {labels[i] == Label::Tumor ? 1.0 : 0.0, labels[i] == Label::Tumor ? 0.0 : 1.0};
    for (std::size_t u = 0; u < 2; ++u) {
      const double q = std::clamp(static_cast<double>(p[i * 2 + u]), kProbFloor, 1.0 - kProbFloor);
      loss -= (target[u] * std::log(q) + (1.0 - target[u]) * std::log(1.0 - q)) / norm;
      if (grad) (*grad)[i * 2 + u] = static_cast<float>((q - target[u]) / (q * (1.0 - q)) / norm);
    }
  }
  return loss;
}

void require_both_labels(std::span<const Label> labels) {
  const auto tumors = std::count(labels.begin(), labels.end(), Label::Tumor);
  if (tumors == 0 || tumors == static_cast<long>(labels.size())) {
    throw Error(ErrorKind::SingleClassDataset, "training data holds a single class");
  }
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  double auc = std::numeric_limits<double>::quiet_NaN();
};

Evaluation evaluate_on(nn::Network<float>& net, const LabeledSet& data, const std::vector<std::size_t>& idx,
                       std::size_t batch) {
  Evaluation e;
  std::vector<ScoredSample> scores;
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    const std::size_t n = std::min(batch, idx.size() - start);
    std::vector<const Volume*> vs;
    std::vector<Label> ls;
    for (std::size_t i = 0; i < n; ++i) {
      vs.push_back(&data.volumes[idx[start + i]]);
      ls.push_back(data.labels[idx[start + i]]);
    }
    const auto& p = net.forward(to_batch(vs), nn::Mode::Eval);
    e.loss += bce(p, ls, nullptr) * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool tumor = ls[i] == Label::Tumor;
      scores.push_back({p[i * 2], tumor});
      if ((p[i * 2] >= 0.5) == tumor) e.accuracy += 1.0;
    }
  }
  const double count = static_cast<double>(idx.size());
  e.loss /= count;
  e.accuracy /= count;
  const bool mixed = std::any_of(scores.begin(), scores.end(), [](auto& s) { return s.tumor; }) &&
                     std::any_of(scores.begin(), scores.end(), [](auto& s) { return !s.tumor; });
  if (mixed) e.auc = roc_pr_curves(scores).roc_auc;
  return e;
}

FoldResult train_fold(const ClassifierConfig& cfg, const LabeledSet& data, const std::vector<std::size_t>& fold_of,
                      std::size_t fold, std::uint64_t seed) {
  FoldResult r;
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == fold ? r.val_indices : train_idx).push_back(i);

  r.model = std::make_shared<nn::Network<float>>(build_classifier(cfg));
  auto& net = *r.model;
  net.set_dropout_seed(mix(seed, 1000 + fold));
  nn::Adam<float> opt(cfg.learning_rate);
  std::mt19937_64 rng(mix(seed, fold));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, train_idx.size() - start);
      std::vector<Volume> vs;
      std::vector<Label> ls;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = train_idx[start + i];
        vs.push_back(cfg.augment ? preprocess::augment_classifier(data.volumes[k], rng()) : data.volumes[k]);
        ls.push_back(data.labels[k]);
      }
      const auto& p = net.forward(to_batch(vs), nn::Mode::Train);
      nn::Tensor<float> dp(p.shape());
      loss_sum += bce(p, ls, &dp) * static_cast<double>(n);
      net.zero_grad();
      net.backward(dp);
      opt.step(net);
    }
    const auto e = evaluate_on(net, data, r.val_indices, cfg.batch_size);
    r.curve.push_back({loss_sum / static_cast<double>(train_idx.size()), e.loss, e.accuracy, e.auc});
  }
  return r;
}

ClassifierRun cross_validate(const ClassifierConfig& cfg, const LabeledSet& data, std::uint64_t seed) {
  ClassifierRun run;
  run.config = cfg;
  run.fold_of = stratified_folds(data.labels, cfg.folds, seed);
  for (std::size_t f = 0; f < cfg.folds; ++f) run.folds.push_back(train_fold(cfg, data, run.fold_of, f, seed));
  return run;
}

double mean_final_auc(const ClassifierRun& run) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : run.folds) {
    const double a = f.curve.empty() ? std::numeric_limits<double>::quiet_NaN() : f.curve.back().val_auc;
    if (std::isfinite(a)) {
      sum += a;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void validate(const ClassifierConfig& cfg) {
  if (cfg.in_edge == 0 || cfg.in_edge % 16 != 0) {
    throw Error(ErrorKind::InvalidConfig, "classifier edge " + std::to_string(cfg.in_edge) + " not divisible by 16");
  }
  if (cfg.kernel % 2 == 0) throw Error(ErrorKind::InvalidConfig, "classifier kernel must be odd");
  for (auto f : cfg.block_filters)
    if (f == 0) throw Error(ErrorKind::InvalidConfig, "classifier block filters must be positive");
  if (cfg.dense_units == 0) throw Error(ErrorKind::InvalidConfig, "dense_units must be positive");
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) {
    throw Error(ErrorKind::InvalidConfig, "dropout rate must lie in [0, 1)");
  }
  if (cfg.batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch_size must be at least 1");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
  if (cfg.folds < 2) throw Error(ErrorKind::InvalidConfig, "cross-validation needs at least two folds");
  if (cfg.epochs < 1) throw Error(ErrorKind::InvalidConfig, "epochs must be positive");
}

nn::ModelGraph build_classifier(const ClassifierConfig& cfg) {
  validate(cfg);
  nn::ModelGraph g;
  g.name = "classifier";
  g.input = {1, nn::Dim3::cube(cfg.in_edge)};
  g.init = nn::InitScheme::HeNormal;
  g.init_seed = cfg.init_seed;
  const std::size_t pad = cfg.kernel / 2;
  for (std::size_t f : cfg.block_filters) {
    LayerSpec conv;
    conv.kind = LayerKind::Conv;
    conv.channels = f;
    conv.kernel = nn::Dim3::cube(cfg.kernel);
    conv.pad_lo = conv.pad_hi = nn::Dim3::cube(pad);
    g.layers.push_back(conv);
    LayerSpec pool;
    pool.kind = LayerKind::MaxPool;
    pool.kernel = pool.stride = nn::Dim3::cube(2);
    g.layers.push_back(pool);
    g.layers.push_back(layer(LayerKind::ReLU));
    g.layers.push_back(layer(LayerKind::BatchNorm));
  }
  g.layers.push_back(layer(LayerKind::Flatten));
  g.layers.push_back(layer(LayerKind::Dense, cfg.dense_units));
  g.layers.push_back(layer(LayerKind::Dropout, 0, cfg.dropout_rate));
  g.layers.push_back(layer(LayerKind::Dense, 2));
  g.layers.push_back(layer(LayerKind::Sigmoid));
  g.infer_shapes();
  return g;
}

void LabeledSet::add(Volume v, Label label, Source source) {
  volumes.push_back(std::move(v));
  labels.push_back(label);
  sources.push_back(source);
}

std::size_t LabeledSet::count(Label label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::size_t LabeledSet::count(Label label, Source source) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) n += labels[i] == label && sources[i] == source;
  return n;
}

LabeledSet load_set(const volio::DatasetManifest& manifest, volio::Role role) {
  LabeledSet s;
  for (const auto& e : manifest.entries)
    if (e.role == role) s.add(volio::load_entry(manifest, e), e.label, e.source);
  return s;
}

std::vector<std::size_t> stratified_folds(std::span<const Label> labels, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorKind::InvalidConfig, "cross-validation needs at least two folds");
  require_both_labels(labels);
  std::vector<std::size_t> fold_of(labels.size());
  std::mt19937_64 rng(seed);
  for (Label cls : {Label::Tumor, Label::Healthy}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) fold_of[members[k]] = k % folds;
  }
  return fold_of;
}

double FoldResult::best_accuracy() const {
  double best = 0.0;
  for (const auto& e : curve) best = std::max(best, e.val_accuracy);
  return best;
}

ClassifierGrid paper_classifier_grid() { return {{8, 12, 16}, {1e-3, 1e-4, 1e-5}}; }

ClassifierRun train_classifier(const ClassifierConfig& cfg, const LabeledSet& train, std::uint64_t seed,
                               const ClassifierGrid* grid) {
  validate(cfg);
  if (train.labels.size() != train.volumes.size()) throw Error(ErrorKind::ShapeMismatch, "labels and volumes differ");
  require_both_labels(train.labels);
  const Extent3 want{cfg.in_edge, cfg.in_edge, cfg.in_edge};
  for (const auto& v : train.volumes)
    if (v.extent() != want) {
      throw Error(ErrorKind::ShapeMismatch, "classifier input is not a " + std::to_string(cfg.in_edge) + "^3 cube");
    }
  if (!grid || grid->batch_sizes.empty() || grid->learning_rates.empty()) return cross_validate(cfg, train, seed);

  ClassifierRun best;
  double best_auc = -1.0;
  std::vector<GridScore> scores;
  for (std::size_t b : grid->batch_sizes)
    for (double lr : grid->learning_rates) {
      ClassifierConfig cell = cfg;
      cell.batch_size = b;
      cell.learning_rate = lr;
      auto run = cross_validate(cell, train, seed);
      const double auc = mean_final_auc(run);
      scores.push_back({b, lr, auc});
      if (std::isfinite(auc) && auc > best_auc) {
        best_auc = auc;
        best = std::move(run);
      } else if (best.folds.empty() && !std::isfinite(auc) && scores.size() == 1) {
        best = std::move(run);
      }
    }
  best.grid = std::move(scores);
  return best;
}

ClassifierRun train_classifier(const ClassifierConfig& cfg, const volio::DatasetManifest& manifest,
                               std::uint64_t seed, const ClassifierGrid* grid) {
  return train_classifier(cfg, load_set(manifest, volio::Role::Train), seed, grid);
}

std::vector<double> predict(nn::Network<float>& model, const std::vector<Volume>& volumes) {
  const auto& in = model.graph().input;
  std::vector<double> out;
  out.reserve(volumes.size());
  constexpr std::size_t kChunk = 8;
  for (std::size_t start = 0; start < volumes.size(); start += kChunk) {
    std::vector<const Volume*> vs;
    for (std::size_t i = start; i < std::min(volumes.size(), start + kChunk); ++i) {
      const Extent3 e = volumes[i].extent();
      if (e.nx != in.s.w || e.ny != in.s.h || e.nz != in.s.d) {
        throw Error(ErrorKind::ShapeMismatch, "volume does not match the classifier input");
      }
      vs.push_back(&volumes[i]);
    }
    const auto& p = model.forward(to_batch(vs), nn::Mode::Eval);
    for (std::size_t i = 0; i < vs.size(); ++i) out.push_back(p[i * 2]);
  }
  return out;
}

double predict(nn::Network<float>& model, const Volume& volume) { return predict(model, std::vector{volume}).front(); }

std::vector<double> predict(const ClassifierRun& run, const std::vector<Volume>& volumes) {
  if (run.folds.empty()) throw Error(ErrorKind::InvalidConfig, "run holds no fold models");
  std::vector<double> mean(volumes.size(), 0.0);
  for (const auto& f : run.folds) {
    const auto p = predict(*f.model, volumes);
    for (std::size_t i = 0; i < p.size(); ++i) mean[i] += p[i] / static_cast<double>(run.folds.size());
  }
  return mean;
}

ConfusionMetrics confusion_metrics(const ConfusionCounts& c) {
  ConfusionMetrics m;
  auto ratio = [](std::size_t num, std::size_t den, bool& degenerate) {
    degenerate = den == 0;
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_degenerate);
  m.recall = ratio(c.tp, c.tp + c.fn, m.recall_degenerate);
  m.tpr = m.recall;
  m.fpr = ratio(c.fp, c.fp + c.tn, m.fpr_degenerate);
  return m;
}

ConfusionCounts confusion_at(std::span<const ScoredSample> scores, double threshold) {
  ConfusionCounts c;
  for (const auto& s : scores) {
    const bool positive = s.score >= threshold;
    if (positive && s.tumor) ++c.tp;
    if (positive && !s.tumor) ++c.fp;
    if (!positive && s.tumor) ++c.fn;
    if (!positive && !s.tumor) ++c.tn;
  }
  return c;
}

Curves roc_pr_curves(std::span<const ScoredSample> scores) {
  const auto pos = static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [](auto& s) { return s.tumor; }));
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorKind::SingleClassScores, "ROC needs both classes among the scores");

  std::vector<ScoredSample> sorted(scores.begin(), scores.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.score > b.score; });

  Curves c;
  const double inf = std::numeric_limits<double>::infinity();
  c.roc.push_back({0.0, 0.0, inf});
  c.pr.push_back({0.0, 1.0, inf});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == t; ++i) (sorted[i].tumor ? tp : fp) += 1;
    const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
    c.roc.push_back({fpr, tpr, t});
    c.pr.push_back({tpr, static_cast<double>(tp) / static_cast<double>(tp + fp), t});
  }
  auto area = [](const std::vector<CurvePoint>& pts) {
    double a = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) a += (pts[i].x - pts[i - 1].x) * (pts[i].y + pts[i - 1].y) / 2.0;
    return a;
  };
  c.roc_auc = area(c.roc);
  c.pr_auc = area(c.pr);
  return c;
}

std::vector<ScoredSample> scored(std::span<const double> probabilities, std::span<const Label> labels) {
  if (probabilities.size() != labels.size()) throw Error(ErrorKind::ShapeMismatch, "scores and labels differ");
  std::vector<ScoredSample> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = {probabilities[i], labels[i] == Label::Tumor};
  return out;
}

void write_curve_csv(const std::vector<CurvePoint>& points, const std::string& x_name, const std::string& y_name,
                     const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::WriteFailure, "cannot write " + path.string());
  os << x_name << ',' << y_name << ",threshold\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.x, p.y, p.threshold);
    os << buf;
  }
  if (!os) throw Error(ErrorKind::WriteFailure, "short write to " + path.string());
}

ConfigCounts counts_of(const LabeledSet& set) {
  return {set.count(Label::Tumor, Source::Real), set.count(Label::Tumor, Source::Synthetic),
          set.count(Label::Healthy, Source::Real), set.count(Label::Healthy, Source::Synthetic)};
}

std::string count_cell(std::size_t real, std::size_t synthetic, const std::string& what) {
  std::string s = std::to_string(real) + " True";
  if (synthetic > 0) s += " + " + std::to_string(synthetic) + " synthesized";
  return s + " " + what;
}

ComparisonReport compare_configs(const LabeledSet& config_i, const LabeledSet& config_ii, const LabeledSet& test,
                                 const ClassifierConfig& cfg, std::uint64_t seed, const ClassifierGrid* grid) {
  require_both_labels(test.labels);
  ComparisonReport report;
  report.test_size = test.size();
  const LabeledSet* sets[2] = {&config_i, &config_ii};
  const char* names[2] = {"Config I", "Config II"};
  for (int k = 0; k < 2; ++k) {
    auto& r = report.configs[k];
    r.name = names[k];
    r.counts = counts_of(*sets[k]);
    r.run = train_classifier(cfg, *sets[k], seed, grid);
    const auto probs = predict(r.run, test.volumes);
    r.test_scores = scored(probs, test.labels);
    r.curves = roc_pr_curves(r.test_scores);
    r.metrics = confusion_metrics(confusion_at(r.test_scores));
  }
  return report;
}

void write_comparison(const ComparisonReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::trunc);
    if (!os) throw Error(ErrorKind::WriteFailure, "cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open("counts.csv");
    os << "Configuration,Category,Real,Synthetic\n";
    for (const auto& c : report.configs) {
      os << c.name << ",PDAC," << c.counts.tumor_real << ',' << c.counts.tumor_synthetic << '\n';
      os << c.name << ",Healthy Pancreas," << c.counts.healthy_real << ',' << c.counts.healthy_synthetic << '\n';
    }
  }
  {
    auto os = open("comparison.csv");
    os << "Configuration,ROC-AUC,PR-AUC,Precision,Recall,FPR,Batch,LearningRate\n";
    for (const auto& c : report.configs) {
      os << c.name << ',' << fmt(c.curves.roc_auc) << ',' << fmt(c.curves.pr_auc) << ',' << fmt(c.metrics.precision)
         << ',' << fmt(c.metrics.recall) << ',' << fmt(c.metrics.fpr) << ',' << c.run.config.batch_size << ','
         << c.run.config.learning_rate << '\n';
    }
  }
  {
    auto os = open("comparison.md");
    os << "| Configuration | Training data |\n|---|---|\n";
    for (const auto& c : report.configs) {
      os << "| " << c.name << " | " << count_cell(c.counts.tumor_real, c.counts.tumor_synthetic, "PDAC") << " |\n";
      os << "|  | " << count_cell(c.counts.healthy_real, c.counts.healthy_synthetic, "Healthy Pancreas") << " |\n";
    }
    os << "\nShared test set: " << report.test_size << " volumes.\n\n";
    os << "| Configuration | ROC AUC | PR AUC | Precision | Recall |\n|---|---|---|---|---|\n";
    for (const auto& c : report.configs) {
      os << "| " << c.name << " | " << fmt(c.curves.roc_auc) << " | " << fmt(c.curves.pr_auc) << " | "
         << fmt(c.metrics.precision) << (c.metrics.precision_degenerate ? " (0/0)" : "") << " | "
         << fmt(c.metrics.recall) << " |\n";
    }
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const std::string tag = k == 0 ? "config_i" : "config_ii";
    write_curve_csv(report.configs[k].curves.roc, "fpr", "tpr", dir / ("roc_" + tag + ".csv"));
    write_curve_csv(report.configs[k].curves.pr, "recall", "precision", dir / ("pr_" + tag + ".csv"));
  }
}

}  // namespace pdac::clf
