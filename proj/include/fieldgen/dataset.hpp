#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fieldgen/boundary.hpp"

namespace fieldgen {

inline constexpr std::uint32_t kSampleFormatVersion = 1;
inline constexpr std::uint32_t kManifestFormatVersion = 1;

struct DatasetConfig {
  std::size_t count = 200;
  std::size_t size = 64;  // square images, also the FDTD grid
  std::size_t n_steps = 2000;
  std::size_t pml_thickness = 10;
  double pml_order = 3.0;
  double pml_sigma_max = 1.0;
  double wavelength = 20.0;
  // Source strength is amplitude / sqrt(width * height) so the peak field
  // stays comparable across rectangle sizes.
  double amplitude = 1.0;
  double clip_amplitude = 0.12;
  std::size_t min_extent = 1;
  std::size_t max_extent = 12;
  double heldout_fraction = 0.1;
  std::uint64_t seed = 1234;

  void validate() const;
};

enum class Split { Train, Heldout };

struct ManifestEntry {
  std::string file;  // relative to the dataset root
  std::string sha256;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::uint32_t format_version = kManifestFormatVersion;
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  std::size_t count() const { return entries.size(); }
  std::vector<std::size_t> indices(Split split) const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<BoundarySample> samples;
};

// Byte image of one sample file.
std::string encode_sample(const BoundarySample& sample);
BoundarySample decode_sample(const std::string& bytes);

void write_sample(const BoundarySample& sample, const std::filesystem::path& path);
// With a non-empty digest the file must hash to it, else CorruptionError.
BoundarySample read_sample(const std::filesystem::path& path, const std::string& expected_sha256 = "");

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);

// Every listed file exists and matches its digest, no file is listed twice,
// and the samples directory holds nothing unlisted.
void verify_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest);

// Geometry of sample `index`, drawn from its own stream.
SourceGeometrySpec sample_geometry(const DatasetConfig& config, std::size_t index);

// Simulates one sample end to end.
BoundarySample generate_sample(const DatasetConfig& config, std::size_t index);

// Seeded split: round(heldout_fraction * count) samples are held out.
std::vector<Split> assign_splits(std::size_t count, double heldout_fraction, std::uint64_t seed);

DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& dir, std::size_t workers);

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace fieldgen
