#include "pdac/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "pdac/error.hpp"

namespace pdac::cli {
namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

// Typed view over one mapping; remembers which keys were read so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(YAML::Node node, std::string where, const fs::path& base)
      : node_(std::move(node)), where_(std::move(where)), base_(base) {
    if (node_.IsDefined() && !node_.IsNull() && !node_.IsMap()) invalid(where_ + " must be a mapping");
  }

  bool has(const char* key) const { return present() && node_[key] && !node_[key].IsNull(); }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      invalid(name(key) + " has an invalid value");
    }
  }

  template <typename T>
  void list(const char* key, std::vector<T>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    if (!node_[key].IsSequence()) invalid(name(key) + " must be a list");
    out.clear();
    for (const auto& item : node_[key]) {
      try {
        out.push_back(item.as<T>());
      } catch (const YAML::Exception&) {
        invalid(name(key) + " has an invalid entry");
      }
    }
  }

  template <typename T, std::size_t N>
  void array(const char* key, std::array<T, N>& out) {
    std::vector<T> v;
    list(key, v);
    if (!has(key)) return;
    if (v.size() != N) invalid(name(key) + " needs " + std::to_string(N) + " entries");
    std::copy(v.begin(), v.end(), out.begin());
  }

  // Resolves against the config directory and writes the absolute path back
  // so the snapshot can be re-run from anywhere.
  void path(const char* key, fs::path& out) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    fs::path p(s);
    if (p.is_relative()) p = base_ / p;
    out = p.lexically_normal();
    node_[key] = out.string();
  }

  template <typename E>
  void choice(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> options) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    for (const auto& [text, value] : options)
      if (s == text) {
        out = value;
        return;
      }
    invalid(name(key) + " has unknown value '" + s + "'");
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(present() ? node_[key] : YAML::Node(), name(key), base_);
  }

  void finish() const {
    if (!present()) return;
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!seen_.count(k)) invalid("unknown key " + name(k.c_str()));
    }
  }

 private:
  bool present() const { return node_.IsDefined() && node_.IsMap(); }
  std::string name(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  YAML::Node node_;
  std::string where_;
  fs::path base_;
  std::set<std::string> seen_;
};

void read_preprocess(Section s, PreprocessSection& out) {
  s.path("input_dir", out.input_dir);
  s.path("mask_dir", out.mask_dir);
  s.get("mask_suffix", out.mask_suffix);
  s.get("output_name", out.output_name);
  s.get("target_mm", out.pipeline.target_mm);
  s.get("repair_defects", out.pipeline.repair_defects);
  s.get("defect_threshold_hu", out.pipeline.defect_threshold_hu);
  auto w = s.child("window");
  w.get("lo", out.pipeline.window.lo);
  w.get("hi", out.pipeline.window.hi);
  w.finish();
  auto r = s.child("roi");
  r.get("edge", out.pipeline.roi.edge);
  r.choice("center_policy", out.pipeline.roi.center_policy,
           {{"centroid", preprocess::CenterPolicy::MaskCentroid}, {"bbox", preprocess::CenterPolicy::MaskBBoxCenter}});
  r.finish();
  s.get("augment", out.augment);
  s.get("flips", out.flips);
  s.finish();
  if (!(out.pipeline.window.lo < out.pipeline.window.hi)) invalid("preprocess.window needs lo < hi");
  if (out.pipeline.roi.edge < 8) invalid("preprocess.roi.edge must be at least 8");
  if (!(out.pipeline.target_mm > 0)) invalid("preprocess.target_mm must be positive");
  if (out.output_name.empty() || out.output_name.find('/') != std::string::npos) {
    invalid("preprocess.output_name must be a plain directory name");
  }
}

void read_gan(Section s, GanSection& out) {
  s.path("data_dir", out.data_dir);
  s.path("held_out_dir", out.held_out_dir);
  auto g = s.child("generator");
  g.get("out_edge", out.generator.out_edge);
  g.get("depth", out.generator.depth);
  g.get("base_channels", out.generator.base_channels);
  g.get("init_seed", out.generator.init_seed);
  g.finish();
  auto d = s.child("discriminator");
  d.get("in_edge", out.discriminator.in_edge);
  d.array("block_channels", out.discriminator.block_channels);
  d.get("kernel", out.discriminator.kernel);
  d.get("conv_stride", out.discriminator.conv_stride);
  d.get("pool", out.discriminator.pool);
  d.get("init_seed", out.discriminator.init_seed);
  d.finish();
  auto t = s.child("training");
  t.get("epochs", out.training.epochs);
  t.get("checkpoint_interval", out.training.checkpoint_interval);
  t.get("batch_size", out.training.batch_size);
  t.get("learning_rate", out.training.learning_rate);
  t.get("non_saturating", out.training.non_saturating);
  t.finish();
  auto grid = s.child("grid");
  grid.get("enabled", out.grid);
  grid.list("batch_sizes", out.grid_space.batch_sizes);
  grid.list("learning_rates", out.grid_space.learning_rates);
  grid.get("budget_epochs", out.grid_budget_epochs);
  grid.finish();
  s.finish();
}

void read_synth(Section s, SynthSection& out) {
  s.path("checkpoint", out.checkpoint);
  s.get("count", out.count);
  s.finish();
  if (out.count == 0) invalid("synth.count must be positive");
}

void read_blend(Section s, BlendSection& out) {
  s.get("method", out.method);
  s.path("tumor_dir", out.tumor_dir);
  s.path("pancreas_dir", out.pancreas_dir);
  s.path("reference_dir", out.reference_dir);
  s.get("mask_threshold", out.mask_threshold);
  auto p = s.child("solver");
  p.choice("kind", out.solve.solver,
           {{"cg", blend::Solver::ConjugateGradient}, {"jacobi", blend::Solver::Jacobi}});
  p.get("max_iterations", out.solve.max_iterations);
  p.get("tolerance", out.solve.residual_tolerance);
  p.finish();
  auto st = s.child("style");
  st.get("iterations", out.style.iterations);
  st.get("step_size", out.style.step_size);
  st.get("w_grad", out.style.w_grad);
  st.get("w_style", out.style.w_style);
  st.get("w_tv", out.style.w_tv);
  st.get("feature_blocks", out.style.feature_blocks);
  st.get("feature_seed", out.style.feature_seed);
  st.finish();
  s.finish();
  if (out.method < 1 || out.method > 3) invalid("blend.method must be 1, 2 or 3");
}

void read_quality(Section s, QualitySection& out) {
  s.path("reference_dir", out.reference_dir);
  s.path("synthesized_dir", out.synthesized_dir);
  s.choice("pairing", out.options.pairing,
           {{"index", quality::Pairing::Index}, {"nearest", quality::Pairing::Nearest}});
  double bw = 0.0;
  s.get("mmd_bandwidth", bw);
  if (bw > 0.0) out.options.mmd.bandwidth = bw;
  s.get("mmd_biased", out.options.mmd.biased);
  s.get("feature_seed", out.options.feature_seed);
  s.get("tissue", out.tissue);
  s.get("model", out.model);
  s.finish();
}

void read_classifier(Section s, ClassifierSection& out) {
  s.path("manifest", out.manifest);
  s.path("compare_manifest", out.compare_manifest);
  auto& c = out.config;
  s.get("in_edge", c.in_edge);
  s.array("block_filters", c.block_filters);
  s.get("kernel", c.kernel);
  s.get("dense_units", c.dense_units);
  s.get("dropout", c.dropout_rate);
  s.get("batch_size", c.batch_size);
  s.get("learning_rate", c.learning_rate);
  s.get("folds", c.folds);
  s.get("epochs", c.epochs);
  s.get("augment", c.augment);
  s.get("init_seed", c.init_seed);
  auto grid = s.child("grid");
  grid.get("enabled", out.grid);
  grid.list("batch_sizes", out.grid_space.batch_sizes);
  grid.list("learning_rates", out.grid_space.learning_rates);
  grid.finish();
  s.finish();
}

// Module validators report InvalidConfig; at this layer that is a usage error.
template <typename F>
void revalidate(const char* section, F&& check) {
  try {
    check();
  } catch (const Error& e) {
    invalid(std::string(section) + ": " + e.what());
  }
}

}  // namespace

Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) invalid("override '" + text + "' is not KEY=VALUE");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

PipelineConfig parse_config(YAML::Node doc, const fs::path& base_dir) {
  if (!doc.IsDefined() || doc.IsNull()) doc = YAML::Node(YAML::NodeType::Map);
  if (!doc.IsMap()) invalid("config root must be a mapping");
  PipelineConfig cfg;
  Section root(doc, "", base_dir);
  auto io = root.child("io");
  io.path("output_dir", cfg.io.output_dir);
  if (!io.has("seed")) invalid("io.seed is required; every run needs an explicit seed");
  io.get("seed", cfg.io.seed);
  io.finish();
  if (cfg.io.output_dir.is_relative()) cfg.io.output_dir = (base_dir / cfg.io.output_dir).lexically_normal();

  read_preprocess(root.child("preprocess"), cfg.preprocess);
  read_gan(root.child("gan"), cfg.gan);
  read_synth(root.child("synth"), cfg.synth);
  read_blend(root.child("blend"), cfg.blend);
  read_quality(root.child("quality"), cfg.quality);
  read_classifier(root.child("classifier"), cfg.classifier);
  root.finish();

  cfg.gan.training.seed = cfg.io.seed;
  revalidate("gan.generator", [&] { gaunet::validate(cfg.gan.generator); });
  revalidate("gan.discriminator", [&] { gaunet::validate(cfg.gan.discriminator); });
  revalidate("gan.training", [&] { gantrain::validate(cfg.gan.training); });
  revalidate("classifier", [&] { clf::validate(cfg.classifier.config); });
  if (cfg.gan.generator.out_edge != cfg.gan.discriminator.in_edge) {
    invalid("gan.generator.out_edge must equal gan.discriminator.in_edge");
  }

  doc["io"]["output_dir"] = cfg.io.output_dir.string();
  doc["io"]["seed"] = cfg.io.seed;
  cfg.document = doc;
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const std::vector<Override>& overrides) {
  if (!fs::is_regular_file(path)) invalid("config file not found: " + path.string());
  YAML::Node doc;
  try {
    doc = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    invalid("config is not valid YAML: " + std::string(e.what()));
  }
  if (!doc.IsDefined() || doc.IsNull()) doc = YAML::Node(YAML::NodeType::Map);
  if (!doc.IsMap()) invalid("config root must be a mapping");

  for (const auto& o : overrides) {
    YAML::Node value;
    try {
      value = YAML::Load(o.value);
    } catch (const YAML::Exception&) {
      invalid("override value for " + o.key + " is not valid YAML");
    }
    std::vector<std::string> parts;
    std::stringstream ss(o.key);
    for (std::string p; std::getline(ss, p, '.');) {
      if (p.empty()) invalid("override key '" + o.key + "' has an empty component");
      parts.push_back(p);
    }
    YAML::Node cur = doc;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!cur[parts[i]] || !cur[parts[i]].IsMap()) cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
      // operator= on a Node copies values; reset rebinds the handle.
      cur.reset(cur[parts[i]]);
    }
    cur[parts.back()] = value;
  }
  return parse_config(doc, fs::absolute(path).parent_path());
}

void save_config(const PipelineConfig& cfg, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::WriteFailure, "cannot write " + path.string());
  YAML::Emitter em;
  em << cfg.document;
  out << em.c_str() << "\n";
}

}  // namespace pdac::cli
