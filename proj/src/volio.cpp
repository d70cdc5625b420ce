#include "pdac/volio.hpp"

#include <yaml-cpp/yaml.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "pdac/error.hpp"

namespace pdac::volio {
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;

enum NiftiType : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
};

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::vector<unsigned char> read_all(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, path.string());
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
  std::vector<unsigned char> bytes;
  std::vector<unsigned char> chunk(1 << 16);
  for (;;) {
    const int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(f);
      throw Error(ErrorKind::MalformedHeader, "corrupt gzip stream in " + path.string());
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(f);
  return bytes;
}

class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_.data() + offset, sizeof(T));
    if (swap_) v = byteswap(v);
    return v;
  }

  template <typename T>
  static T byteswap(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  bool swap_;
};

template <typename T>
void put(std::vector<unsigned char>& buf, std::size_t offset, T v) {
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

struct RawVolume {
  Extent3 extent;
  Spacing3 spacing;
  std::vector<float> values;
};

RawVolume read_nifti(const fs::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < kHeaderSize) throw Error(ErrorKind::MalformedHeader, "file shorter than NIfTI header");

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
    if (HeaderReader::byteswap(sizeof_hdr) == static_cast<std::int32_t>(kHeaderSize)) {
      swap = true;
    } else {
      throw Error(ErrorKind::MalformedHeader, "sizeof_hdr is not 348");
    }
  }
  if (std::memcmp(bytes.data() + 344, "n+1", 4) != 0) {
    throw Error(ErrorKind::MalformedHeader, "missing single-file NIfTI-1 magic 'n+1'");
  }
  HeaderReader h(bytes, swap);

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = h.get<std::int16_t>(40 + 2 * i);
  if (dim[0] < 1 || dim[0] > 7) throw Error(ErrorKind::MalformedHeader, "dim[0] out of range");
  if (dim[0] < 3) throw Error(ErrorKind::NonThreeDimensional, std::to_string(dim[0]) + "-D payload");
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] > 1) throw Error(ErrorKind::NonThreeDimensional, std::to_string(dim[0]) + "-D payload");
  }
  for (int i = 1; i <= 3; ++i) {
    if (dim[i] < 1) throw Error(ErrorKind::MalformedHeader, "non-positive dimension");
  }

  const auto datatype = h.get<std::int16_t>(70);
  float pixdim[8];
  for (int i = 0; i < 8; ++i) pixdim[i] = h.get<float>(76 + 4 * i);
  const float vox_offset = h.get<float>(108);
  float slope = h.get<float>(112);
  const float inter = h.get<float>(116);
  if (slope == 0.0f || !std::isfinite(slope)) slope = 1.0f;

  RawVolume raw;
  raw.extent = {static_cast<std::size_t>(dim[1]), static_cast<std::size_t>(dim[2]),
                static_cast<std::size_t>(dim[3])};
  raw.spacing = {std::fabs(pixdim[1]), std::fabs(pixdim[2]), std::fabs(pixdim[3])};
  if (!(raw.spacing.sx > 0 && raw.spacing.sy > 0 && raw.spacing.sz > 0)) {
    throw Error(ErrorKind::MalformedHeader, "pixdim spacing must be positive");
  }

  std::size_t width = 0;
  switch (datatype) {
    case kUInt8: case kInt8: width = 1; break;
    case kInt16: case kUInt16: width = 2; break;
    case kInt32: case kUInt32: case kFloat32: width = 4; break;
    case kFloat64: width = 8; break;
    default: throw Error(ErrorKind::MalformedHeader, "unsupported datatype " + std::to_string(datatype));
  }
  const std::size_t n = raw.extent.count();
  const auto offset = static_cast<std::size_t>(vox_offset);
  if (offset < kHeaderSize || bytes.size() < offset + n * width) {
    throw Error(ErrorKind::MalformedHeader, "voxel payload truncated");
  }
  raw.values.resize(n);
  const unsigned char* p = bytes.data() + offset;
  const bool scaled = slope != 1.0f || inter != 0.0f;
  auto decode = [&]<typename T>(T) {
    for (std::size_t i = 0; i < n; ++i) {
      T v;
      std::memcpy(&v, p + i * sizeof(T), sizeof(T));
      if (swap) v = HeaderReader::byteswap(v);
      raw.values[i] = scaled ? static_cast<float>(static_cast<double>(v) * slope + inter)
                             : static_cast<float>(v);
    }
  };
  switch (datatype) {
    case kUInt8: decode(std::uint8_t{}); break;
    case kInt8: decode(std::int8_t{}); break;
    case kInt16: decode(std::int16_t{}); break;
    case kUInt16: decode(std::uint16_t{}); break;
    case kInt32: decode(std::int32_t{}); break;
    case kUInt32: decode(std::uint32_t{}); break;
    case kFloat32: decode(float{}); break;
    case kFloat64: decode(double{}); break;
    default: break;
  }
  return raw;
}

void write_nifti(const fs::path& path, Extent3 extent, Spacing3 spacing, std::span<const float> values) {
  std::vector<unsigned char> buf(kVoxOffset + values.size() * sizeof(float), 0);
  put<std::int32_t>(buf, 0, static_cast<std::int32_t>(kHeaderSize));
  put<char>(buf, 38, 'r');
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(extent.nx), static_cast<std::int16_t>(extent.ny),
                               static_cast<std::int16_t>(extent.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put<std::int16_t>(buf, 40 + 2 * i, dim[i]);
  put<std::int16_t>(buf, 70, kFloat32);
  put<std::int16_t>(buf, 72, 32);
  const float pixdim[8] = {1.0f, static_cast<float>(spacing.sx), static_cast<float>(spacing.sy),
                           static_cast<float>(spacing.sz), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) put<float>(buf, 76 + 4 * i, pixdim[i]);
  put<float>(buf, 108, static_cast<float>(kVoxOffset));
  put<float>(buf, 112, 1.0f);
  put<float>(buf, 116, 0.0f);
  put<char>(buf, 123, 2);  // xyzt_units: millimeters
  // Identity orientation: voxel (i, j, k) sits at (i*sx, j*sy, k*sz).
  put<std::int16_t>(buf, 254, 1);  // sform_code
  put<float>(buf, 280, static_cast<float>(spacing.sx));
  put<float>(buf, 296 + 4, static_cast<float>(spacing.sy));
  put<float>(buf, 312 + 8, static_cast<float>(spacing.sz));
  std::memcpy(buf.data() + 344, "n+1", 4);
  std::memcpy(buf.data() + kVoxOffset, values.data(), values.size() * sizeof(float));

  const bool gz = ends_with(path.string(), ".gz");
  if (gz) {
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (f == nullptr) throw Error(ErrorKind::WriteFailure, "cannot open " + path.string());
    const int written = gzwrite(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (gzclose(f) != Z_OK || written != static_cast<int>(buf.size())) {
      throw Error(ErrorKind::WriteFailure, "gzip write failed for " + path.string());
    }
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::WriteFailure, "cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error(ErrorKind::WriteFailure, "write failed for " + path.string());
  }
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

}  // namespace

std::string volume_stem(const fs::path& volume_path) {
  std::string name = volume_path.filename().string();
  for (std::string_view suffix : {".nii.gz", ".nii"}) {
    if (ends_with(name, suffix)) return name.substr(0, name.size() - suffix.size());
  }
  return volume_path.stem().string();
}

fs::path sidecar_path(const fs::path& volume_path) {
  return volume_path.parent_path() / (volume_stem(volume_path) + ".meta.json");
}

std::vector<fs::path> list_volumes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::MissingFile, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && (ends_with(name, ".nii") || ends_with(name, ".nii.gz"))) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Volume load_volume(const fs::path& path) {
  auto raw = read_nifti(path);
  IntensitySpace space = IntensitySpace::HU;
  const auto meta = sidecar_path(path);
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    try {
      const auto j = nlohmann::json::parse(in);
      const auto s = upper(j.value("intensity_space", std::string("HU")));
      if (s == "NORMALIZED") {
        space = IntensitySpace::Normalized;
      } else if (s != "HU") {
        throw Error(ErrorKind::MalformedHeader, "unknown intensity_space '" + s + "' in " + meta.string());
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedHeader, "bad sidecar " + meta.string() + ": " + e.what());
    }
  }
  return Volume(Grid3<float>(raw.extent, std::move(raw.values)), raw.spacing, space);
}

void save_volume(const Volume& volume, const fs::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw Error(ErrorKind::WriteFailure, "parent directory does not exist: " + parent.string());
  }
  write_nifti(path, volume.extent(), volume.spacing(), volume.values());
  std::ofstream meta(sidecar_path(path));
  if (!meta) throw Error(ErrorKind::WriteFailure, "cannot write sidecar for " + path.string());
  meta << nlohmann::json{{"intensity_space", std::string(to_string(volume.space()))}}.dump() << "\n";
}

Mask load_mask(const fs::path& path) {
  auto raw = read_nifti(path);
  Mask mask(raw.extent);
  for (std::size_t i = 0; i < raw.values.size(); ++i) mask[i] = raw.values[i] != 0.0f ? 1 : 0;
  return mask;
}

void save_mask(const Mask& mask, const fs::path& path, Spacing3 spacing) {
  std::vector<float> values(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) values[i] = mask[i] ? 1.0f : 0.0f;
  write_nifti(path, mask.extent(), spacing, values);
}

std::string_view to_string(Label v) noexcept { return v == Label::Tumor ? "TUMOR" : "HEALTHY"; }
std::string_view to_string(Role v) noexcept { return v == Role::Train ? "TRAIN" : "TEST"; }
std::string_view to_string(Source v) noexcept { return v == Source::Real ? "REAL" : "SYNTHETIC"; }

std::map<CountKey, std::size_t> DatasetManifest::counts() const {
  std::map<CountKey, std::size_t> out;
  for (const auto& e : entries) ++out[{e.label, e.role, e.source}];
  return out;
}

std::size_t DatasetManifest::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.label == label; }));
}

std::size_t DatasetManifest::count(Label label, Source source) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const auto& e) { return e.label == label && e.source == source; }));
}

std::size_t DatasetManifest::count(Label label, Role role, Source source) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) {
    return e.label == label && e.role == role && e.source == source;
  }));
}

DatasetManifest DatasetManifest::with_role(Role role) const {
  DatasetManifest out;
  out.shape_contract = shape_contract;
  for (const auto& e : entries)
    if (e.role == role) out.entries.push_back(e);
  return out;
}

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, path.string());
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::MalformedHeader, "manifest is not valid YAML: " + std::string(e.what()));
  }
  const auto base = fs::absolute(path).parent_path();
  DatasetManifest m;
  if (root["shape_contract"]) m.shape_contract = root["shape_contract"].as<std::size_t>();
  const auto entries = root["entries"];
  if (!entries || !entries.IsSequence()) {
    throw Error(ErrorKind::MalformedHeader, "manifest needs a top-level 'entries' list");
  }

  std::set<fs::path> seen;
  for (const auto& node : entries) {
    if (!node["path"] || !node["label"]) {
      throw Error(ErrorKind::MalformedHeader, "manifest entry needs 'path' and 'label'");
    }
    ManifestEntry e;
    fs::path p = node["path"].as<std::string>();
    e.path = (p.is_absolute() ? p : base / p).lexically_normal();

    const auto label = upper(node["label"].as<std::string>());
    if (label == "TUMOR") e.label = Label::Tumor;
    else if (label == "HEALTHY") e.label = Label::Healthy;
    else throw Error(ErrorKind::UnknownLabel, "label '" + label + "'");

    const auto role = upper(node["role"] ? node["role"].as<std::string>() : "TRAIN");
    if (role == "TRAIN") e.role = Role::Train;
    else if (role == "TEST") e.role = Role::Test;
    else throw Error(ErrorKind::UnknownLabel, "role '" + role + "'");

    const auto source = upper(node["source"] ? node["source"].as<std::string>() : "REAL");
    if (source == "REAL") e.source = Source::Real;
    else if (source == "SYNTHETIC") e.source = Source::Synthetic;
    else throw Error(ErrorKind::UnknownLabel, "source '" + source + "'");

    if (!seen.insert(e.path).second) throw Error(ErrorKind::DuplicatePath, e.path.string());
    if (!fs::exists(e.path)) throw Error(ErrorKind::MissingFileReferenced, e.path.string());
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const auto base = fs::absolute(path).parent_path();
  YAML::Emitter out;
  out << YAML::BeginMap;
  if (manifest.shape_contract) out << YAML::Key << "shape_contract" << YAML::Value << manifest.shape_contract;
  out << YAML::Key << "entries" << YAML::Value << YAML::BeginSeq;
  for (const auto& e : manifest.entries) {
    auto rel = fs::absolute(e.path).lexically_relative(base);
    const auto p = (rel.empty() || *rel.begin() == "..") ? e.path : rel;
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "path" << YAML::Value << p.generic_string()
        << YAML::Key << "label" << YAML::Value << std::string(to_string(e.label)) << YAML::Key << "role"
        << YAML::Value << std::string(to_string(e.role)) << YAML::Key << "source" << YAML::Value
        << std::string(to_string(e.source)) << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::WriteFailure, path.string());
  f << out.c_str() << "\n";
}

Volume load_entry(const DatasetManifest& manifest, const ManifestEntry& entry) {
  auto v = load_volume(entry.path);
  const auto edge = manifest.shape_contract;
  if (edge != 0 && !(v.is_cube() && v.extent().nx == edge)) {
    throw Error(ErrorKind::ShapeMismatch, entry.path.string() + " does not match shape contract " +
                                              std::to_string(edge) + "^3");
  }
  return v;
}

}  // namespace pdac::volio
