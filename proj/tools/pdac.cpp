#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdac/cli/commands.hpp"
#include "pdac/cli/config.hpp"
#include "pdac/error.hpp"

namespace fs = std::filesystem;

namespace {

struct Args {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> method;
};

int fail(std::string_view stage, const pdac::Error& e) {
  std::cerr << "pdac: error stage=" << stage << " kind=" << pdac::to_string(e.kind()) << " message=\"" << e.what()
            << "\"\n";
  return e.kind() == pdac::ErrorKind::ConfigInvalid ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric tumor synthesis, blending, quality and classification pipeline", "pdac"};
  app.require_subcommand(1, 1);
  Args args;
  for (auto name : pdac::cli::kSubcommands) {
    auto* sub = app.add_subcommand(std::string(name));
    sub->add_option("--config", args.config, "Pipeline YAML config")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", args.sets, "Override KEY=VALUE with a dotted key (repeatable)");
    sub->add_option("--seed", args.seed, "Overrides io.seed");
    sub->add_option("--out", args.out, "Overrides io.output_dir");
    if (name == "blend") sub->add_option("--method", args.method, "Blend I, II or III")->check(CLI::Range(1, 3));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  const auto stage = app.get_subcommands().front()->get_name();
  try {
    std::vector<pdac::cli::Override> overrides;
    for (const auto& s : args.sets) overrides.push_back(pdac::cli::parse_override(s));
    if (args.seed) overrides.push_back({"io.seed", std::to_string(*args.seed)});
    if (!args.out.empty()) overrides.push_back({"io.output_dir", fs::absolute(args.out).string()});
    if (args.method) overrides.push_back({"blend.method", std::to_string(*args.method)});
    const auto cfg = pdac::cli::load_config(args.config, overrides);
    pdac::cli::run_subcommand(stage, cfg);
  } catch (const pdac::Error& e) {
    return fail(stage, e);
  } catch (const std::exception& e) {
    std::cerr << "pdac: error stage=" << stage << " kind=Internal message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 0;
}
