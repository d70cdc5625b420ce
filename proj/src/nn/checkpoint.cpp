#include "pdac/nn/checkpoint.hpp"

#include <array>
#include <fstream>

#include "pdac/error.hpp"

namespace pdac::nn {
namespace {

constexpr std::array<char, 4> kMagic{'P', 'D', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::ofstream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::ifstream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw Error(ErrorKind::BadCheckpoint, "truncated checkpoint");
  return v;
}

template <typename T>
void write_block(std::ofstream& os, std::span<const T> values) {
  put<std::uint64_t>(os, values.size());
  for (const T v : values) put<double>(os, static_cast<double>(v));
}

template <typename T>
void read_block(std::ifstream& is, std::span<T> dst, const std::string& what) {
  const auto n = get<std::uint64_t>(is);
  if (n != dst.size()) {
    throw Error(ErrorKind::BadCheckpoint, what + ": stored " + std::to_string(n) + " values, graph expects " +
                                              std::to_string(dst.size()));
  }
  for (auto& v : dst) v = static_cast<T>(get<double>(is));
}

}  // namespace

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Network<T>& net, const CheckpointMeta& meta) {
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::WriteFailure, "cannot write checkpoint " + path.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kVersion);
    const auto params = net.parameters();
    const auto bufs = net.buffers();
    put<std::uint64_t>(os, params.size());
    put<std::uint64_t>(os, bufs.size());
    for (const auto& p : params) write_block<T>(os, p.value);
    for (const auto& b : bufs) write_block<T>(os, b);
    if (!os) throw Error(ErrorKind::WriteFailure, "short write on " + path.string());
  }
  const nlohmann::json side{{"kind", meta.kind},
                            {"config", meta.config},
                            {"graph", to_json(net.graph())},
                            {"epoch", meta.epoch},
                            {"seed", meta.seed},
                            {"parameter_count", net.parameter_count()}};
  std::ofstream js(checkpoint_sidecar(path), std::ios::trunc);
  if (!js) throw Error(ErrorKind::WriteFailure, "cannot write " + checkpoint_sidecar(path).string());
  js << side.dump(2) << "\n";
  if (!js) throw Error(ErrorKind::WriteFailure, "short write on " + checkpoint_sidecar(path).string());
}

template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream js(checkpoint_sidecar(path));
  if (!js) throw Error(ErrorKind::BadCheckpoint, "missing checkpoint sidecar for " + path.string());
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("unreadable sidecar: ") + e.what());
  }
  if (!side.contains("graph")) throw Error(ErrorKind::BadCheckpoint, "sidecar lacks a graph description");
  Network<T> net(graph_from_json(side["graph"]));

  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::BadCheckpoint, "cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw Error(ErrorKind::BadCheckpoint, path.string() + " is not a checkpoint");
  if (get<std::uint32_t>(is) != kVersion) throw Error(ErrorKind::BadCheckpoint, "unsupported checkpoint version");
  auto params = net.parameters();
  auto bufs = net.buffers();
  if (get<std::uint64_t>(is) != params.size() || get<std::uint64_t>(is) != bufs.size()) {
    throw Error(ErrorKind::BadCheckpoint, "tensor count does not match graph");
  }
  for (auto& p : params) read_block<T>(is, p.value, p.name);
  for (auto& b : bufs) read_block<T>(is, b, "batch-norm buffer");

  if (meta) {
    try {
      meta->kind = side.at("kind").get<std::string>();
      meta->config = side.value("config", nlohmann::json::object());
      meta->epoch = side.at("epoch").get<int>();
      meta->seed = side.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::BadCheckpoint, std::string("incomplete sidecar: ") + e.what());
    }
  }
  return net;
}

template void save_checkpoint<float>(const std::filesystem::path&, Network<float>&, const CheckpointMeta&);
template void save_checkpoint<double>(const std::filesystem::path&, Network<double>&, const CheckpointMeta&);
template Network<float> load_checkpoint<float>(const std::filesystem::path&, CheckpointMeta*);
template Network<double> load_checkpoint<double>(const std::filesystem::path&, CheckpointMeta*);

}  // namespace pdac::nn
