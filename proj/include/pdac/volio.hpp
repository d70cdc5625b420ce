#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string_view>
#include <tuple>
#include <vector>

#include "pdac/volume.hpp"

namespace pdac::volio {

/// Reads a single-file NIfTI-1 volume (.nii or .nii.gz). Voxel (i, j, k) is
/// taken as (x, y, z) without reorientation. Intensity space is HU unless a
/// `<name>.meta.json` sidecar marks it NORMALIZED.
Volume load_volume(const std::filesystem::path& path);

/// Writes float32 NIfTI-1 (gzip-compressed when the path ends in .gz) plus
/// the intensity-space sidecar.
void save_volume(const Volume& volume, const std::filesystem::path& path);

/// Masks are NIfTI volumes with values in {0, 1}; any nonzero voxel is inside.
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& mask, const std::filesystem::path& path, Spacing3 spacing = {});

/// `dir/name.nii.gz` -> `dir/name.meta.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& volume_path);

/// Stem with any .nii / .nii.gz suffix removed.
std::string volume_stem(const std::filesystem::path& volume_path);

/// Sorted list of .nii / .nii.gz files in a directory.
std::vector<std::filesystem::path> list_volumes(const std::filesystem::path& dir);

enum class Label { Tumor, Healthy };
enum class Role { Train, Test };
enum class Source { Real, Synthetic };

std::string_view to_string(Label v) noexcept;
std::string_view to_string(Role v) noexcept;
std::string_view to_string(Source v) noexcept;

struct ManifestEntry {
  std::filesystem::path path;  // absolute after loading
  Label label = Label::Healthy;
  Role role = Role::Train;
  Source source = Source::Real;
};

using CountKey = std::tuple<Label, Role, Source>;

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  /// Expected cube edge; 0 disables the check.
  std::size_t shape_contract = 0;

  std::map<CountKey, std::size_t> counts() const;
  std::size_t count(Label label) const;
  std::size_t count(Label label, Source source) const;
  std::size_t count(Label label, Role role, Source source) const;
  /// Entries whose role matches.
  DatasetManifest with_role(Role role) const;
};

/// Parses a YAML manifest:
///
///   shape_contract: 64
///   entries:
///     - {path: a.nii.gz, label: TUMOR, role: TRAIN, source: REAL}
///
/// Relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes a manifest; paths are written relative to the manifest directory
/// when possible.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Loads one entry and enforces the manifest's shape contract.
Volume load_entry(const DatasetManifest& manifest, const ManifestEntry& entry);

}  // namespace pdac::volio
