#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "pdac/blend.hpp"
#include "pdac/gantrain.hpp"
#include "pdac/gaunet.hpp"
#include "pdac/pdacclf.hpp"
#include "pdac/preprocess.hpp"
#include "pdac/quality.hpp"

namespace pdac::cli {

struct IoSection {
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
};

struct PreprocessSection {
  std::filesystem::path input_dir;
  std::filesystem::path mask_dir;  // defaults to input_dir
  std::string mask_suffix = "_mask";
  std::string output_name = "volumes";
  preprocess::PipelineOptions pipeline{};
  bool augment = false;
  bool flips = false;
};

struct GanSection {
  std::filesystem::path data_dir;  // defaults to the preprocess output
  gaunet::GeneratorConfig generator{};
  gaunet::DiscriminatorConfig discriminator{};
  gantrain::GanTrainConfig training{};
  bool grid = false;
  gantrain::GridSpace grid_space = gantrain::paper_grid();
  int grid_budget_epochs = 100;
  std::filesystem::path held_out_dir;
};

struct SynthSection {
  std::filesystem::path checkpoint;  // defaults to the selected train-gan checkpoint
  std::size_t count = 8;
};

struct BlendSection {
  int method = 3;
  std::filesystem::path tumor_dir;  // defaults to the synth output
  std::filesystem::path pancreas_dir;
  std::filesystem::path reference_dir;  // enables the three-method ranking table
  float mask_threshold = 0.1f;
  blend::PoissonSolveConfig solve{};
  blend::StyleConfig style{};
};

struct QualitySection {
  std::filesystem::path reference_dir;    // defaults to gan data
  std::filesystem::path synthesized_dir;  // defaults to the synth output
  quality::EvaluateOptions options{};
  std::string tissue = "Tumor";
  std::string model = "Generator";
};

struct ClassifierSection {
  std::filesystem::path manifest;
  std::filesystem::path compare_manifest;  // Config II training entries
  clf::ClassifierConfig config{};
  bool grid = false;
  clf::ClassifierGrid grid_space = clf::paper_classifier_grid();
};

struct PipelineConfig {
  IoSection io;
  PreprocessSection preprocess;
  GanSection gan;
  SynthSection synth;
  BlendSection blend;
  QualitySection quality;
  ClassifierSection classifier;

  /// Effective document after overrides, with paths made absolute.
  YAML::Node document;
};

/// `key.path=value`; the value is parsed as a YAML scalar or flow node.
struct Override {
  std::string key;
  std::string value;
};
Override parse_override(const std::string& text);

/// Loads the YAML file, applies overrides in order and parses the typed
/// config. Unknown keys, bad values and a missing io.seed raise
/// ConfigInvalid. Relative paths resolve against the config's directory.
PipelineConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {});
PipelineConfig parse_config(YAML::Node doc, const std::filesystem::path& base_dir);

/// Writes `cfg.document` as YAML.
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);

}  // namespace pdac::cli
