#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "pdac/error.hpp"
#include "pdac/volio.hpp"

using namespace pdac;
using namespace pdac::volio;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("pdac_volio_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::ConfigInvalid;
}

// Minimal uncompressed NIfTI-1 writer used as an independent oracle.
void write_raw_nifti(const fs::path& p, std::vector<std::int16_t> dims, const std::vector<float>& data) {
  std::vector<char> h(352, 0);
  const std::int32_t sizeof_hdr = 348;
  std::memcpy(h.data(), &sizeof_hdr, 4);
  std::int16_t dim[8] = {static_cast<std::int16_t>(dims.size()), 1, 1, 1, 1, 1, 1, 1};
  for (std::size_t i = 0; i < dims.size(); ++i) dim[i + 1] = dims[i];
  std::memcpy(h.data() + 40, dim, sizeof dim);
  const std::int16_t datatype = 16, bitpix = 32;
  std::memcpy(h.data() + 70, &datatype, 2);
  std::memcpy(h.data() + 72, &bitpix, 2);
  const float pixdim[8] = {1, 1, 1, 1, 1, 1, 1, 1};
  std::memcpy(h.data() + 76, pixdim, sizeof pixdim);
  const float vox_offset = 352;
  std::memcpy(h.data() + 108, &vox_offset, 4);
  std::memcpy(h.data() + 344, "n+1\0", 4);
  std::ofstream out(p, std::ios::binary);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
}

}  // namespace

TEST(VolumeIo, RoundTripConstantAndSpacing) {
  const auto d = scratch_dir("roundtrip");
  const auto v = Volume::filled({4, 4, 4}, 0.5f);
  save_volume(v, d / "a.nii.gz");
  EXPECT_EQ(load_volume(d / "a.nii.gz"), v);

  const auto w = Volume::filled({5, 3, 2}, -20.0f, {2, 2, 2});
  save_volume(w, d / "b.nii");
  const auto back = load_volume(d / "b.nii");
  EXPECT_EQ(back.spacing(), (Spacing3{2, 2, 2}));
  EXPECT_EQ(back.extent(), (Extent3{5, 3, 2}));
}

TEST(VolumeIo, HeaderMatchesIndependentReader) {
  const auto d = scratch_dir("header");
  save_volume(Volume::filled({6, 5, 4}, 1.0f, {2.0, 1.5, 3.0}), d / "h.nii");
  std::ifstream in(d / "h.nii", std::ios::binary);
  std::vector<char> h(348);
  in.read(h.data(), 348);
  std::int32_t sizeof_hdr;
  std::int16_t dim[8];
  float pixdim[8];
  std::memcpy(&sizeof_hdr, h.data(), 4);
  std::memcpy(dim, h.data() + 40, sizeof dim);
  std::memcpy(pixdim, h.data() + 76, sizeof pixdim);
  EXPECT_EQ(sizeof_hdr, 348);
  EXPECT_EQ(dim[0], 3);
  EXPECT_EQ(dim[1], 6);
  EXPECT_EQ(dim[2], 5);
  EXPECT_EQ(dim[3], 4);
  EXPECT_EQ(pixdim[1], 2.0f);
  EXPECT_EQ(pixdim[2], 1.5f);
  EXPECT_EQ(pixdim[3], 3.0f);
  EXPECT_EQ(std::string(h.data() + 344, 3), "n+1");
}

TEST(VolumeIo, RandomVolumeBitExactAndNormalizedSidecar) {
  const auto d = scratch_dir("random");
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Grid3<float> g({32, 32, 32});
  for (auto& x : g.storage()) x = u(rng);
  const Volume v(g, {}, IntensitySpace::Normalized);
  save_volume(v, d / "r.nii.gz");
  const auto back = load_volume(d / "r.nii.gz");
  EXPECT_EQ(back.space(), IntensitySpace::Normalized);
  EXPECT_EQ(back.grid(), v.grid());
  EXPECT_TRUE(fs::exists(sidecar_path(d / "r.nii.gz")));
  EXPECT_EQ(sidecar_path(d / "r.nii.gz").filename(), "r.meta.json");

  save_volume(Volume::filled({8, 8, 8}, 0.0f), d / "z.nii");
  for (float x : load_volume(d / "z.nii").values()) EXPECT_EQ(x, 0.0f);
}

TEST(VolumeIo, Errors) {
  const auto d = scratch_dir("errors");
  EXPECT_EQ(kind_of([&] { load_volume(d / "missing.nii"); }), ErrorKind::MissingFile);
  write_raw_nifti(d / "flat.nii", {4, 4}, std::vector<float>(16, 1.0f));
  EXPECT_EQ(kind_of([&] { load_volume(d / "flat.nii"); }), ErrorKind::NonThreeDimensional);
  write_raw_nifti(d / "movie.nii", {2, 2, 2, 3}, std::vector<float>(24, 1.0f));
  EXPECT_EQ(kind_of([&] { load_volume(d / "movie.nii"); }), ErrorKind::NonThreeDimensional);
  { std::ofstream(d / "junk.nii") << "not a header"; }
  EXPECT_EQ(kind_of([&] { load_volume(d / "junk.nii"); }), ErrorKind::MalformedHeader);
  EXPECT_EQ(kind_of([&] { save_volume(Volume::filled({2, 2, 2}, 0.f), d / "nope" / "x.nii"); }),
            ErrorKind::WriteFailure);

  write_raw_nifti(d / "ok.nii", {2, 3, 4}, std::vector<float>(24, 7.0f));
  const auto v = load_volume(d / "ok.nii");
  EXPECT_EQ(v.extent(), (Extent3{2, 3, 4}));
  EXPECT_EQ(v.space(), IntensitySpace::HU);
}

TEST(VolumeIo, MaskRoundTrip) {
  const auto d = scratch_dir("mask");
  Mask m({4, 4, 4});
  m(1, 2, 3) = 1;
  m(0, 0, 0) = 1;
  save_mask(m, d / "m.nii.gz");
  EXPECT_EQ(load_mask(d / "m.nii.gz"), m);
}

namespace {

fs::path write_manifest(const fs::path& d, const std::vector<std::tuple<std::string, std::string, std::string, std::string>>& rows) {
  std::ofstream out(d / "manifest.yaml");
  out << "shape_contract: 4\nentries:\n";
  for (const auto& [path, label, role, source] : rows) {
    if (!fs::exists(d / path)) save_volume(Volume::filled({4, 4, 4}, 0.0f), d / path);
    out << "  - {path: " << path << ", label: " << label << ", role: " << role << ", source: " << source << "}\n";
  }
  return d / "manifest.yaml";
}

}  // namespace

TEST(Manifest, CountsSmall) {
  const auto d = scratch_dir("manifest_small");
  const auto p = write_manifest(d, {{"t0.nii", "TUMOR", "TRAIN", "REAL"},
                                    {"t1.nii", "TUMOR", "TRAIN", "REAL"},
                                    {"h0.nii", "HEALTHY", "TRAIN", "REAL"},
                                    {"h1.nii", "HEALTHY", "TRAIN", "REAL"},
                                    {"h2.nii", "HEALTHY", "TRAIN", "REAL"}});
  const auto m = load_manifest(p);
  EXPECT_EQ(m.count(Label::Tumor), 2u);
  EXPECT_EQ(m.count(Label::Healthy), 3u);
  EXPECT_EQ(m.shape_contract, 4u);
  EXPECT_TRUE(m.entries[0].path.is_absolute());
  EXPECT_EQ(load_entry(m, m.entries[0]).extent(), (Extent3{4, 4, 4}));

  save_manifest(m, d / "copy.yaml");
  const auto again = load_manifest(d / "copy.yaml");
  EXPECT_EQ(again.entries.size(), 5u);
  EXPECT_EQ(again.entries[3].path, m.entries[3].path);
}

TEST(Manifest, TableFourComposition) {
  const auto d = scratch_dir("manifest_table");
  const auto vol = d / "v.nii";
  save_volume(Volume::filled({4, 4, 4}, 0.0f), vol);
  std::vector<std::tuple<std::string, std::string, std::string, std::string>> rows;
  auto add = [&](int n, const char* label, const char* source, const char* prefix) {
    for (int i = 0; i < n; ++i) {
      const std::string name = std::string(prefix) + std::to_string(i) + ".nii";
      fs::create_symlink(vol, d / name);
      rows.emplace_back(name, label, "TRAIN", source);
    }
  };
  add(139, "TUMOR", "REAL", "tr");
  add(114, "TUMOR", "SYNTHETIC", "ts");
  add(203, "HEALTHY", "REAL", "hr");
  add(50, "HEALTHY", "SYNTHETIC", "hs");
  const auto m = load_manifest(write_manifest(d, rows));
  EXPECT_EQ(m.count(Label::Tumor, Source::Real), 139u);
  EXPECT_EQ(m.count(Label::Tumor, Source::Synthetic), 114u);
  EXPECT_EQ(m.count(Label::Healthy, Source::Real), 203u);
  EXPECT_EQ(m.count(Label::Healthy, Source::Synthetic), 50u);
  std::size_t total = 0;
  for (const auto& [key, n] : m.counts()) total += n;
  EXPECT_EQ(total, m.entries.size());
}

TEST(Manifest, Errors) {
  const auto d = scratch_dir("manifest_err");
  const auto dup = write_manifest(d, {{"a.nii", "TUMOR", "TRAIN", "REAL"}, {"a.nii", "HEALTHY", "TEST", "REAL"}});
  EXPECT_EQ(kind_of([&] { load_manifest(dup); }), ErrorKind::DuplicatePath);
  const auto bad = write_manifest(d, {{"a.nii", "MAYBE", "TRAIN", "REAL"}});
  EXPECT_EQ(kind_of([&] { load_manifest(bad); }), ErrorKind::UnknownLabel);
  {
    std::ofstream out(d / "manifest.yaml");
    out << "entries:\n  - {path: gone.nii, label: TUMOR}\n";
  }
  EXPECT_EQ(kind_of([&] { load_manifest(d / "manifest.yaml"); }), ErrorKind::MissingFileReferenced);
}
