#include "pdac/gantrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "pdac/batch.hpp"
#include "pdac/error.hpp"
#include "pdac/nn/checkpoint.hpp"

namespace pdac::gantrain {
namespace {

namespace fs = std::filesystem;
using nn::Mode;
using nn::Tensor;

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string epoch_tag(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "e%05d", epoch);
  return buf;
}

nlohmann::json train_json(const GanTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"checkpoint_interval", c.checkpoint_interval},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"non_saturating", c.non_saturating}};
}

std::vector<double> column(const Tensor<float>& t) {
  std::vector<double> v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = t[i];
  return v;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// d(mean f(p))/dp for a D output tensor, one element per sample.
template <typename F>
Tensor<float> prob_grad(const Tensor<float>& p, F&& df) {
  Tensor<float> g(p.shape());
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = static_cast<float>(df(clamp_prob(p[i])) / n);
  return g;
}

int largest_divisor_at_most(int n, int cap) {
  for (int d = std::min(n, cap); d > 1; --d)
    if (n % d == 0) return d;
  return 1;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void validate(const GanTrainConfig& cfg) {
  if (cfg.epochs < 1) throw Error(ErrorKind::InvalidConfig, "epochs must be positive");
  if (cfg.checkpoint_interval < 1 || cfg.epochs % cfg.checkpoint_interval != 0) {
    throw Error(ErrorKind::InvalidConfig, "checkpoint_interval " + std::to_string(cfg.checkpoint_interval) +
                                              " must divide epochs " + std::to_string(cfg.epochs));
  }
  if (cfg.batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be at least 1");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
}

GanLosses gan_losses(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw Error(ErrorKind::EmptyBatch, "GAN losses need nonempty batches");
  double log_real = 0.0, log_not_fake = 0.0;
  for (double p : d_real) log_real += std::log(clamp_prob(p));
  for (double q : d_fake) log_not_fake += std::log(1.0 - clamp_prob(q));
  log_real /= static_cast<double>(d_real.size());
  log_not_fake /= static_cast<double>(d_fake.size());
  return {log_not_fake, -(log_real + log_not_fake)};
}

TrainingRun train_gan(const GanTrainConfig& cfg, const std::vector<Volume>& dataset,
                      const gaunet::GeneratorConfig& g_cfg, const gaunet::DiscriminatorConfig& d_cfg,
                      const fs::path& out_dir) {
  validate(cfg);
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "GAN training set is empty");
  if (d_cfg.in_edge != g_cfg.out_edge) {
    throw Error(ErrorKind::ShapeMismatch, "discriminator edge differs from generator edge");
  }
  const Extent3 want{g_cfg.out_edge, g_cfg.out_edge, g_cfg.out_edge};
  for (const auto& v : dataset) {
    if (v.extent() != want) {
      throw Error(ErrorKind::ShapeMismatch, "training volume is not a " + std::to_string(g_cfg.out_edge) + "^3 cube");
    }
  }
  fs::create_directories(out_dir);

  nn::Network<float> gen(gaunet::build_generator(g_cfg));
  nn::Network<float> disc(gaunet::build_discriminator(d_cfg));
  nn::Adam<float> g_opt(cfg.learning_rate), d_opt(cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed);

  TrainingRun run;
  run.config = cfg;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double g_sum = 0, d_sum = 0, real_sum = 0, fake_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<const Volume*> picks;
      for (std::size_t i = 0; i < n; ++i) picks.push_back(&dataset[order[start + i]]);
      const Tensor<float> real = to_batch(picks);
      const Tensor<float> z = sample_noise(n, g_cfg.out_edge, rng());
      const Tensor<float> fake = gen.forward(z, Mode::Train);

      // Discriminator step on real and detached fake samples.
      disc.zero_grad();
      const auto d_real = column(disc.forward(real, Mode::Train));
      disc.backward(prob_grad(disc.activation(disc.layer_count() - 1), [](double p) { return -1.0 / p; }));
      const auto d_fake = column(disc.forward(fake, Mode::Train));
      disc.backward(prob_grad(disc.activation(disc.layer_count() - 1), [](double q) { return 1.0 / (1.0 - q); }));
      d_opt.step(disc);

      // Generator step through the updated discriminator.
      const auto& q = disc.forward(fake, Mode::Train);
      const Tensor<float> dq = cfg.non_saturating ? prob_grad(q, [](double p) { return -1.0 / p; })
                                                  : prob_grad(q, [](double p) { return -1.0 / (1.0 - p); });
      const Tensor<float> dfake = disc.backward(dq);
      gen.zero_grad();
      gen.backward(dfake);
      g_opt.step(gen);

      const auto losses = gan_losses(d_real, d_fake);
      g_sum += losses.g_loss;
      d_sum += losses.d_loss;
      real_sum += mean(d_real);
      fake_sum += mean(d_fake);
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    run.g_loss_curve.push_back(g_sum / nb);
    run.d_loss_curve.push_back(d_sum / nb);
    run.d_real_curve.push_back(real_sum / nb);
    run.d_fake_curve.push_back(fake_sum / nb);

    if (epoch % cfg.checkpoint_interval == 0) {
      CheckpointRecord rec{epoch, out_dir / ("gen_" + epoch_tag(epoch) + ".bin"),
                           out_dir / ("disc_" + epoch_tag(epoch) + ".bin")};
      const nlohmann::json config{{"generator", gaunet::to_json(g_cfg)},
                                  {"discriminator", gaunet::to_json(d_cfg)},
                                  {"train", train_json(cfg)}};
      nn::save_checkpoint(rec.generator, gen, {"generator", config, epoch, cfg.seed});
      nn::save_checkpoint(rec.discriminator, disc, {"discriminator", config, epoch, cfg.seed});
      run.checkpoints.push_back(rec);
    }
  }
  run.selected_epoch = select_checkpoint(run);
  return run;
}

int select_checkpoint(const TrainingRun& run, double spike_ratio, int window) {
  if (run.checkpoints.empty()) throw Error(ErrorKind::NoCheckpoints, "run has no checkpoints");
  const auto& g = run.g_loss_curve;
  const int epochs = static_cast<int>(g.size());
  int onset = 0;
  for (int t = 2; t <= epochs && onset == 0; ++t) {
    const double med = median(std::vector<double>(g.begin(), g.begin() + (t - 1)));
    const double threshold = med + (spike_ratio - 1.0) * std::abs(med);
    int run_len = 0;
    while (t + run_len <= epochs && g[static_cast<std::size_t>(t + run_len - 1)] > threshold) ++run_len;
    if (run_len > 0 && (run_len >= window || t + run_len > epochs)) onset = t;
  }
  if (onset == 0) return run.checkpoints.back().epoch;
  int chosen = run.checkpoints.front().epoch;
  for (const auto& c : run.checkpoints)
    if (c.epoch < onset) chosen = std::max(chosen, c.epoch);
  return chosen;
}

void write_loss_csv(const TrainingRun& run, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::WriteFailure, "cannot write " + path.string());
  os << "epoch,g_loss,d_loss\n";
  for (std::size_t i = 0; i < run.g_loss_curve.size(); ++i) {
    os << (i + 1) << "," << fmt("%.17g", run.g_loss_curve[i]) << "," << fmt("%.17g", run.d_loss_curve[i]) << "\n";
  }
  if (!os) throw Error(ErrorKind::WriteFailure, "short write on " + path.string());
}

GridSpace paper_grid() { return {{4, 8, 16, 32}, {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}}; }

GridSearchResult grid_search(const GridSpace& space, int budget_epochs, const GanTrainConfig& base,
                             const std::vector<Volume>& train, const std::vector<Volume>& held_out,
                             const gaunet::GeneratorConfig& g_cfg, const gaunet::DiscriminatorConfig& d_cfg,
                             const fs::path& out_dir) {
  if (space.batch_sizes.empty() || space.learning_rates.empty()) {
    throw Error(ErrorKind::InvalidConfig, "grid search space is empty");
  }
  if (train.empty()) throw Error(ErrorKind::EmptyDataset, "grid search training set is empty");
  if (held_out.size() < 2) throw Error(ErrorKind::InsufficientSamples, "grid search needs >= 2 held-out volumes");
  const auto features = quality::build_feature_network(quality::kFeatureSeed, g_cfg.out_edge);

  GridSearchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (const auto bs : space.batch_sizes) {
    for (const auto lr : space.learning_rates) {
      GanTrainConfig cfg = base;
      cfg.batch_size = bs;
      cfg.learning_rate = lr;
      cfg.epochs = budget_epochs;
      cfg.checkpoint_interval = largest_divisor_at_most(budget_epochs, base.checkpoint_interval);
      GridCell cell;
      cell.batch_size = bs;
      cell.learning_rate = lr;
      cell.dir = out_dir / ("bs" + std::to_string(bs) + "_lr" + fmt("%g", lr));
      const auto run = train_gan(cfg, train, g_cfg, d_cfg, cell.dir);
      cell.selected_epoch = run.selected_epoch;
      cell.diverged = !all_finite(run.g_loss_curve) || !all_finite(run.d_loss_curve);
      cell.f3d = std::numeric_limits<double>::infinity();
      if (!cell.diverged) {
        const auto it = std::find_if(run.checkpoints.begin(), run.checkpoints.end(),
                                     [&](const CheckpointRecord& c) { return c.epoch == run.selected_epoch; });
        try {
          const auto synth = synthesize(it->generator, held_out.size(), base.seed + 1);
          cell.f3d = quality::f3d(synth, held_out, features);
        } catch (const Error&) {
          cell.diverged = true;
        }
      }
      if (cell.f3d < best) {
        best = cell.f3d;
        result.best_index = result.cells.size();
        result.best = cfg;
      }
      result.cells.push_back(cell);
    }
  }
  if (!std::isfinite(best)) {
    result.best_index = 0;
    result.best = base;
    result.best.batch_size = result.cells.front().batch_size;
    result.best.learning_rate = result.cells.front().learning_rate;
  }
  return result;
}

void write_grid_csv(const GridSearchResult& result, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::WriteFailure, "cannot write " + path.string());
  os << "batch_size,learning_rate,selected_epoch,f3d,diverged,best\n";
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    os << c.batch_size << "," << fmt("%g", c.learning_rate) << "," << c.selected_epoch << ","
       << quality::format_number(c.f3d) << "," << (c.diverged ? 1 : 0) << "," << (i == result.best_index ? 1 : 0)
       << "\n";
  }
  if (!os) throw Error(ErrorKind::WriteFailure, "short write on " + path.string());
}

std::vector<Volume> synthesize(const fs::path& generator_checkpoint, std::size_t n, std::uint64_t seed) {
  nn::CheckpointMeta meta;
  auto gen = nn::load_checkpoint<float>(generator_checkpoint, &meta);
  if (meta.kind != "generator") {
    throw Error(ErrorKind::BadCheckpoint, generator_checkpoint.string() + " holds a " + meta.kind + ", not a generator");
  }
  std::vector<Volume> out;
  if (n == 0) return out;
  const std::size_t edge = gen.graph().input.s.w;
  const Tensor<float> z = sample_noise(n, edge, seed);
  constexpr std::size_t kChunk = 8;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    Tensor<float> part(nn::Shape5{count, 1, nn::Dim3::cube(edge)});
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(z.sample(start + i).begin(), z.sample(start + i).end(), part.sample(i).begin());
    }
    for (auto& v : gaunet::generate(gen, part)) out.push_back(std::move(v));
  }
  return out;
}

}  // namespace pdac::gantrain
