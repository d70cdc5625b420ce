#include "pdac/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pdac/cli/png.hpp"
#include "pdac/cli/runlog.hpp"
#include "pdac/error.hpp"
#include "pdac/nn/checkpoint.hpp"
#include "pdac/volio.hpp"

namespace pdac::cli {
namespace fs = std::filesystem;
using volio::Label;
using volio::Role;

namespace {

[[noreturn]] void missing_input(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

void log(std::string_view stage, const std::string& msg) { std::cerr << "[" << stage << "] " << msg << "\n"; }

std::string number(double v) { return quality::format_number(v); }

fs::path require_dir(const fs::path& dir, const std::string& key) {
  if (dir.empty()) missing_input(key + " is not set");
  if (!fs::is_directory(dir)) missing_input(key + " does not exist: " + dir.string());
  return dir;
}

std::vector<Volume> load_dir(const fs::path& dir) {
  std::vector<Volume> out;
  for (const auto& p : volio::list_volumes(dir)) out.push_back(volio::load_volume(p));
  if (out.empty()) throw Error(ErrorKind::EmptyDataset, "no volumes in " + dir.string());
  return out;
}

void save_numbered(const std::vector<Volume>& volumes, const fs::path& dir, const std::string& stem,
                   const fs::path& slice_dir = {}) {
  fs::create_directories(dir);
  char name[64];
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    std::snprintf(name, sizeof name, "%s_%03zu", stem.c_str(), i);
    volio::save_volume(volumes[i], dir / (std::string(name) + ".nii.gz"));
    if (!slice_dir.empty()) export_slices(volumes[i], slice_dir, name);
  }
}

fs::path gan_data_dir(const PipelineConfig& cfg) {
  return cfg.gan.data_dir.empty() ? stage_dir(cfg, "preprocess") / cfg.preprocess.output_name : cfg.gan.data_dir;
}

fs::path synth_dir(const PipelineConfig& cfg) { return stage_dir(cfg, "synth") / "volumes"; }

void copy_if_present(const fs::path& from, const fs::path& to) {
  if (fs::is_regular_file(from)) fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

// ---------------------------------------------------------------- stages

void run_preprocess(const PipelineConfig& cfg) {
  const auto& p = cfg.preprocess;
  const auto in = require_dir(p.input_dir, "preprocess.input_dir");
  const auto masks = require_dir(p.mask_dir.empty() ? p.input_dir : p.mask_dir, "preprocess.mask_dir");
  const auto out = stage_dir(cfg, "preprocess") / p.output_name;
  fs::remove_all(out);
  fs::create_directories(out);

  std::vector<fs::path> scans;
  for (const auto& f : volio::list_volumes(in)) {
    const auto stem = volio::volume_stem(f);
    if (stem.size() < p.mask_suffix.size() || stem.substr(stem.size() - p.mask_suffix.size()) != p.mask_suffix)
      scans.push_back(f);
  }
  if (scans.empty()) throw Error(ErrorKind::EmptyDataset, "no scans in " + in.string());

  std::size_t written = 0;
  for (const auto& scan : scans) {
    const auto stem = volio::volume_stem(scan);
    fs::path mask_path;
    for (const char* ext : {".nii.gz", ".nii"})
      if (fs::exists(masks / (stem + p.mask_suffix + ext))) mask_path = masks / (stem + p.mask_suffix + ext);
    if (mask_path.empty()) throw Error(ErrorKind::MissingFile, "no mask for " + scan.string());

    const auto cube = preprocess::run_pipeline(volio::load_volume(scan), volio::load_mask(mask_path), p.pipeline);
    volio::save_volume(cube, out / (stem + ".nii.gz"));
    ++written;
    if (written == 1) export_slices(cube, out / "slices", stem);
    if (p.augment) {
      const auto copies = preprocess::augment_gan(cube, p.flips);
      char name[32];
      for (std::size_t k = 0; k < copies.size(); ++k) {
        std::snprintf(name, sizeof name, "_aug%02zu.nii.gz", k);
        volio::save_volume(copies[k], out / (stem + name));
        ++written;
      }
    }
  }
  log("preprocess", std::to_string(scans.size()) + " scans -> " + std::to_string(written) + " cubes in " +
                        out.string());
  write_run_manifest(out, "preprocess", cfg, {in, masks});
}

void run_train_gan(const PipelineConfig& cfg) {
  const auto data_dir = require_dir(gan_data_dir(cfg), "gan.data_dir");
  const auto out = stage_dir(cfg, "train-gan");
  fs::remove_all(out);
  fs::create_directories(out);
  const auto data = load_dir(data_dir);

  auto training = cfg.gan.training;
  std::vector<fs::path> inputs{data_dir};
  if (cfg.gan.grid) {
    const auto held_dir = require_dir(cfg.gan.held_out_dir, "gan.held_out_dir");
    inputs.push_back(held_dir);
    const auto grid = gantrain::grid_search(cfg.gan.grid_space, cfg.gan.grid_budget_epochs, training, data,
                                            load_dir(held_dir), cfg.gan.generator, cfg.gan.discriminator,
                                            out / "grid");
    gantrain::write_grid_csv(grid, out / "grid.csv");
    training.batch_size = grid.best.batch_size;
    training.learning_rate = grid.best.learning_rate;
    log("train-gan", "grid picked batch " + std::to_string(training.batch_size) + ", lr " +
                         number(training.learning_rate));
  }

  const auto run = gantrain::train_gan(training, data, cfg.gan.generator, cfg.gan.discriminator, out / "checkpoints");
  gantrain::write_loss_csv(run, out / "losses.csv");
  const auto it = std::find_if(run.checkpoints.begin(), run.checkpoints.end(),
                               [&](const auto& c) { return c.epoch == run.selected_epoch; });
  nlohmann::json sel{{"epoch", run.selected_epoch},
                     {"generator", it->generator.string()},
                     {"discriminator", it->discriminator.string()},
                     {"batch_size", training.batch_size},
                     {"learning_rate", training.learning_rate},
                     {"final_d_fake", run.d_fake_curve.back()},
                     {"final_d_real", run.d_real_curve.back()}};
  std::ofstream(out / "selected.json") << sel.dump(2) << "\n";
  log("train-gan", std::to_string(run.g_loss_curve.size()) + " epochs, selected checkpoint epoch " +
                       std::to_string(run.selected_epoch));
  write_run_manifest(out, "train-gan", cfg, inputs);
}

void run_synth(const PipelineConfig& cfg) {
  fs::path ckpt = cfg.synth.checkpoint;
  fs::path selection;
  if (ckpt.empty()) {
    selection = stage_dir(cfg, "train-gan") / "selected.json";
    if (!fs::exists(selection)) missing_input("synth.checkpoint is not set and " + selection.string() + " is missing");
    nlohmann::json j;
    std::ifstream(selection) >> j;
    ckpt = j.at("generator").get<std::string>();
  }
  if (!fs::exists(ckpt)) missing_input("generator checkpoint not found: " + ckpt.string());
  const auto out = stage_dir(cfg, "synth");
  fs::remove_all(out);
  const auto volumes = gantrain::synthesize(ckpt, cfg.synth.count, cfg.io.seed);
  save_numbered(volumes, out / "volumes", "synth", out / "slices");
  log("synth", std::to_string(volumes.size()) + " volumes from " + ckpt.string());
  write_run_manifest(out, "synth", cfg, {ckpt, nn::checkpoint_sidecar(ckpt), selection});
}

void run_blend(const PipelineConfig& cfg) {
  const auto& b = cfg.blend;
  const auto tumor_dir = require_dir(b.tumor_dir.empty() ? synth_dir(cfg) : b.tumor_dir, "blend.tumor_dir");
  const auto pancreas_dir = require_dir(b.pancreas_dir, "blend.pancreas_dir");
  const auto tumors = load_dir(tumor_dir);
  const auto pool = load_dir(pancreas_dir);
  std::vector<Volume> pancreases;
  for (std::size_t i = 0; i < tumors.size(); ++i) pancreases.push_back(pool[i % pool.size()]);

  const auto out = stage_dir(cfg, "blend");
  fs::remove_all(out);
  const std::array<blend::Method, 3> methods{blend::Method::CopyPaste, blend::Method::Gradient,
                                             blend::Method::Style};
  const auto chosen = methods[static_cast<std::size_t>(b.method - 1)];
  std::vector<std::pair<blend::Method, std::vector<Volume>>> outputs;
  outputs.emplace_back(chosen, blend::blend_all(chosen, tumors, pancreases, b.solve, b.style, b.mask_threshold));
  const auto tag = "method_" + std::to_string(b.method);
  save_numbered(outputs.front().second, out / tag, "blend", out / "slices");
  log("blend", std::string(blend::method_name(chosen)) + " on " + std::to_string(tumors.size()) + " pairs");

  std::vector<fs::path> inputs{tumor_dir, pancreas_dir};
  if (!b.reference_dir.empty()) {
    const auto ref_dir = require_dir(b.reference_dir, "blend.reference_dir");
    inputs.push_back(ref_dir);
    for (auto m : methods)
      if (m != chosen)
        outputs.emplace_back(m, blend::blend_all(m, tumors, pancreases, b.solve, b.style, b.mask_threshold));
    std::sort(outputs.begin(), outputs.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    const auto ranking = blend::rank_outputs(outputs, load_dir(ref_dir), b.style.feature_seed);
    blend::write_blend_table(ranking, out / "table3.csv");
    log("blend", "ranked all methods into " + (out / "table3.csv").string());
  }
  write_run_manifest(out, "blend", cfg, inputs);
}

void run_evaluate(const PipelineConfig& cfg) {
  const auto& q = cfg.quality;
  const auto ref_dir = require_dir(q.reference_dir.empty() ? gan_data_dir(cfg) : q.reference_dir,
                                   "quality.reference_dir");
  const auto syn_dir = require_dir(q.synthesized_dir.empty() ? synth_dir(cfg) : q.synthesized_dir,
                                   "quality.synthesized_dir");
  const auto report = quality::evaluate(load_dir(ref_dir), load_dir(syn_dir), q.options);
  const auto out = stage_dir(cfg, "evaluate");
  fs::create_directories(out);
  const std::vector<std::pair<std::string, std::string>> labels{{q.tissue, q.model}};
  quality::write_slice_table(out / "table1.csv", labels, {report});
  quality::write_volume_table(out / "table2.csv", labels, {report});
  log("evaluate", "F3D " + number(report.f3d) + ", MMD2 " + number(report.mmd2) + ", MS-SSIM " +
                      number(report.ms_ssim));
  write_run_manifest(out, "evaluate", cfg, {ref_dir, syn_dir});
}

nlohmann::json classifier_json(const clf::ClassifierConfig& c) {
  return {{"in_edge", c.in_edge},         {"block_filters", c.block_filters}, {"kernel", c.kernel},
          {"dense_units", c.dense_units}, {"dropout", c.dropout_rate},        {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"folds", c.folds},             {"epochs", c.epochs},
          {"augment", c.augment},         {"init_seed", c.init_seed}};
}

volio::DatasetManifest require_manifest(const fs::path& path, const std::string& key) {
  if (path.empty()) missing_input(key + " is not set");
  if (!fs::is_regular_file(path)) missing_input(key + " does not exist: " + path.string());
  return volio::load_manifest(path);
}

std::vector<fs::path> manifest_inputs(const fs::path& manifest_path, const volio::DatasetManifest& m) {
  std::vector<fs::path> out{manifest_path};
  for (const auto& e : m.entries) out.push_back(e.path);
  return out;
}

void run_train_classifier(const PipelineConfig& cfg) {
  const auto& c = cfg.classifier;
  const auto manifest = require_manifest(c.manifest, "classifier.manifest");
  const auto out = stage_dir(cfg, "train-classifier");
  fs::remove_all(out);
  fs::create_directories(out / "models");
  const auto run = clf::train_classifier(c.config, manifest, cfg.io.seed, c.grid ? &c.grid_space : nullptr);

  std::ofstream curves(out / "curves.csv");
  curves << "fold,epoch,train_loss,val_loss,val_accuracy,val_auc\n";
  for (std::size_t k = 0; k < run.folds.size(); ++k) {
    const auto& f = run.folds[k];
    for (std::size_t e = 0; e < f.curve.size(); ++e)
      curves << k << ',' << e + 1 << ',' << number(f.curve[e].train_loss) << ',' << number(f.curve[e].val_loss)
             << ',' << number(f.curve[e].val_accuracy) << ',' << number(f.curve[e].val_auc) << "\n";
    nn::save_checkpoint(out / "models" / ("fold_" + std::to_string(k) + ".bin"), *f.model,
                        {"classifier", classifier_json(run.config), f.curve.empty() ? 0 : int(f.curve.size()),
                         cfg.io.seed});
  }
  if (!run.grid.empty()) {
    std::ofstream grid(out / "grid.csv");
    grid << "batch_size,learning_rate,mean_val_auc\n";
    for (const auto& g : run.grid)
      grid << g.batch_size << ',' << number(g.learning_rate) << ',' << number(g.mean_val_auc) << "\n";
  }
  nlohmann::json summary{{"config", classifier_json(run.config)},
                         {"parameter_count", nn::count_parameters(clf::build_classifier(run.config))},
                         {"folds", run.folds.size()}};
  std::ofstream(out / "summary.json") << summary.dump(2) << "\n";
  log("train-classifier", std::to_string(run.folds.size()) + " fold models in " + (out / "models").string());
  write_run_manifest(out, "train-classifier", cfg, manifest_inputs(c.manifest, manifest));
}

void write_scores(const clf::Curves& curves, const clf::ConfusionCounts& counts, const fs::path& dir) {
  clf::write_curve_csv(curves.roc, "fpr", "tpr", dir / "roc.csv");
  clf::write_curve_csv(curves.pr, "recall", "precision", dir / "pr.csv");
  const auto m = clf::confusion_metrics(counts);
  std::ofstream os(dir / "metrics.csv");
  os << "ROC-AUC,PR-AUC,Precision,Recall,FPR,TP,TN,FP,FN\n"
     << number(curves.roc_auc) << ',' << number(curves.pr_auc) << ',' << number(m.precision) << ','
     << number(m.recall) << ',' << number(m.fpr) << ',' << counts.tp << ',' << counts.tn << ',' << counts.fp << ','
     << counts.fn << "\n";
}

void run_eval_classifier(const PipelineConfig& cfg) {
  const auto& c = cfg.classifier;
  const auto manifest = require_manifest(c.manifest, "classifier.manifest");
  const auto model_dir = stage_dir(cfg, "train-classifier") / "models";
  if (!fs::is_directory(model_dir)) missing_input("no trained models in " + model_dir.string());
  const auto out = stage_dir(cfg, "eval-classifier");
  fs::remove_all(out);
  fs::create_directories(out);

  std::vector<fs::path> model_files;
  for (const auto& e : fs::directory_iterator(model_dir))
    if (e.path().extension() == ".bin") model_files.push_back(e.path());
  std::sort(model_files.begin(), model_files.end());
  if (model_files.empty()) missing_input("no trained models in " + model_dir.string());
  clf::ClassifierRun run;
  for (const auto& f : model_files) {
    clf::FoldResult fold;
    fold.model = std::make_shared<nn::Network<float>>(nn::load_checkpoint<float>(f));
    run.folds.push_back(std::move(fold));
  }

  const auto test_manifest = manifest.with_role(Role::Test);
  const auto test = clf::load_set(manifest, Role::Test);
  if (test.size() == 0) throw Error(ErrorKind::EmptyDataset, "manifest has no TEST entries");
  const auto probs = clf::predict(run, test.volumes);
  const auto scores = clf::scored(probs, test.labels);
  {
    std::ofstream os(out / "scores.csv");
    os << "path,label,score\n";
    for (std::size_t i = 0; i < probs.size(); ++i)
      os << test_manifest.entries[i].path.string() << ',' << volio::to_string(test.labels[i]) << ','
         << number(probs[i]) << "\n";
  }
  const auto curves = clf::roc_pr_curves(scores);
  write_scores(curves, clf::confusion_at(scores), out);
  log("eval-classifier", "ROC-AUC " + number(curves.roc_auc) + ", PR-AUC " + number(curves.pr_auc));

  auto inputs = manifest_inputs(c.manifest, manifest);
  inputs.push_back(model_dir);
  if (!c.compare_manifest.empty()) {
    const auto second = require_manifest(c.compare_manifest, "classifier.compare_manifest");
    const auto report = clf::compare_configs(clf::load_set(manifest, Role::Train), clf::load_set(second, Role::Train),
                                             test, c.config, cfg.io.seed, c.grid ? &c.grid_space : nullptr);
    clf::write_comparison(report, out / "comparison");
    log("eval-classifier", "Config I AUC " + number(report.configs[0].curves.roc_auc) + ", Config II AUC " +
                               number(report.configs[1].curves.roc_auc));
    const auto more = manifest_inputs(c.compare_manifest, second);
    inputs.insert(inputs.end(), more.begin(), more.end());
  }
  write_run_manifest(out, "eval-classifier", cfg, inputs);
}

std::vector<std::pair<double, double>> read_curve(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<double, double>> pts;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string x, y;
    std::getline(ss, x, ',');
    std::getline(ss, y, ',');
    pts.emplace_back(std::stod(x), std::stod(y));
  }
  return pts;
}

void run_report(const PipelineConfig& cfg) {
  const auto out = stage_dir(cfg, "report");
  fs::remove_all(out);
  fs::create_directories(out);
  std::ostringstream md;
  md << "# Run report\n\nSeed: " << cfg.io.seed << "\n\n";

  const auto params = nn::count_parameters(clf::build_classifier(cfg.classifier.config));
  const auto paper_params = nn::count_parameters(clf::build_classifier(clf::ClassifierConfig{}));
  md << "## Classifier size\n\n"
     << "- configured classifier: " << params << " trainable parameters\n"
     << "- default (full-width) classifier: " << paper_params << " trainable parameters\n"
     << "- published figure: " << clf::kPaperParameterCount << " (difference "
     << static_cast<long long>(paper_params) - static_cast<long long>(clf::kPaperParameterCount) << ")\n\n";

  std::vector<fs::path> inputs;
  auto table = [&](const fs::path& from, const std::string& name, const std::string& title) {
    if (!fs::is_regular_file(from)) return;
    copy_if_present(from, out / name);
    inputs.push_back(from);
    md << "## " << title << "\n\n```\n";
    std::ifstream in(from);
    md << in.rdbuf() << "```\n\n";
  };
  table(stage_dir(cfg, "evaluate") / "table1.csv", "table1.csv", "Slice-wise FID and PSNR");
  table(stage_dir(cfg, "evaluate") / "table2.csv", "table2.csv", "Volume metrics");
  table(stage_dir(cfg, "blend") / "table3.csv", "table3.csv", "Blending methods");
  table(stage_dir(cfg, "eval-classifier") / "metrics.csv", "classifier_metrics.csv", "Classifier on the test set");
  table(stage_dir(cfg, "eval-classifier") / "comparison" / "counts.csv", "counts.csv", "Dataset configurations");
  table(stage_dir(cfg, "eval-classifier") / "comparison" / "comparison.csv", "comparison.csv",
        "Configuration comparison");

  const auto eval_dir = stage_dir(cfg, "eval-classifier");
  if (fs::is_regular_file(eval_dir / "roc.csv")) {
    for (const char* name : {"roc", "pr"}) {
      const auto csv = eval_dir / (std::string(name) + ".csv");
      copy_if_present(csv, out / csv.filename());
      inputs.push_back(csv);
      plot_curves({{read_curve(csv), {200, 30, 30}}}, std::string(name) == "roc",
                  out / (std::string(name) + ".png"));
    }
    md << "Plots: roc.png, pr.png (point lists in roc.csv, pr.csv).\n\n";
  }
  const auto cmp = eval_dir / "comparison";
  if (fs::is_regular_file(cmp / "roc_config_i.csv")) {
    for (const char* name : {"roc", "pr"}) {
      std::vector<PlotSeries> series;
      for (const auto& [suffix, color] : {std::pair{"config_i", std::array<std::uint8_t, 3>{200, 30, 30}},
                                          std::pair{"config_ii", std::array<std::uint8_t, 3>{30, 60, 200}}}) {
        const auto csv = cmp / (std::string(name) + "_" + suffix + ".csv");
        copy_if_present(csv, out / csv.filename());
        series.push_back({read_curve(csv), color});
      }
      plot_curves(series, std::string(name) == "roc", out / (std::string(name) + "_comparison.png"));
    }
    md << "Configuration plots: roc_comparison.png, pr_comparison.png (Config I red, Config II blue).\n\n";
  }

  for (const auto& [dir, stem] : {std::pair{synth_dir(cfg), std::string("synth")},
                                  std::pair{stage_dir(cfg, "blend") / ("method_" + std::to_string(cfg.blend.method)),
                                            std::string("blend")}}) {
    if (!fs::is_directory(dir)) continue;
    const auto files = volio::list_volumes(dir);
    if (files.empty()) continue;
    export_slices(volio::load_volume(files.front()), out / "slices", stem);
    inputs.push_back(files.front());
    md << "Slices of " << files.front().filename().string() << ": slices/" << stem << "_{sag,ax,cor}.png\n\n";
  }

  std::ofstream(out / "report.md") << md.str();
  log("report", "written to " + out.string());
  write_run_manifest(out, "report", cfg, inputs);
}

}  // namespace

bool is_subcommand(std::string_view name) noexcept {
  return std::find(kSubcommands.begin(), kSubcommands.end(), name) != kSubcommands.end();
}

fs::path stage_dir(const PipelineConfig& cfg, std::string_view stage) { return cfg.io.output_dir / stage; }

void run_subcommand(std::string_view name, const PipelineConfig& cfg) {
  if (name == "preprocess") run_preprocess(cfg);
  else if (name == "train-gan") run_train_gan(cfg);
  else if (name == "synth") run_synth(cfg);
  else if (name == "blend") run_blend(cfg);
  else if (name == "evaluate") run_evaluate(cfg);
  else if (name == "train-classifier") run_train_classifier(cfg);
  else if (name == "eval-classifier") run_eval_classifier(cfg);
  else if (name == "report") run_report(cfg);
  else throw Error(ErrorKind::ConfigInvalid, "unknown subcommand '" + std::string(name) + "'");
}

}  // namespace pdac::cli
