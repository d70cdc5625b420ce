#include "pdac/cli/runlog.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <memory>

#include <json.hpp>

#include "pdac/error.hpp"

namespace pdac::cli {
namespace fs = std::filesystem;

std::string git_blob_sha1(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, file.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');

  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error(ErrorKind::WriteFailure, "SHA-1 failed for " + file.string());
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& p : inputs) {
    if (p.empty()) continue;
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

void write_run_manifest(const fs::path& dir, const std::string& subcommand, const PipelineConfig& cfg,
                        const std::vector<fs::path>& inputs) {
  fs::create_directories(dir);
  const auto snapshot = dir / "config.yaml";
  save_config(cfg, snapshot);
  YAML::Emitter em;
  em << cfg.document;

  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["seed"] = cfg.io.seed;
  j["config_yaml"] = em.c_str();
  j["rerun"] = "pdac " + subcommand + " --config " + snapshot.string();
  auto& files = j["inputs"] = nlohmann::json::array();
  for (const auto& f : expand_inputs(inputs)) files.push_back({{"path", f.string()}, {"sha1", git_blob_sha1(f)}});

  std::ofstream out(dir / "run_manifest.json", std::ios::trunc);
  if (!out) throw Error(ErrorKind::WriteFailure, "cannot write run manifest in " + dir.string());
  out << j.dump(2) << "\n";
}

}  // namespace pdac::cli
