#include "fieldgen/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "fieldgen/digest.hpp"
#include "fieldgen/errors.hpp"
#include "fieldgen/fdtd.hpp"
#include "fieldgen/fileio.hpp"
#include "fieldgen/parallel.hpp"
#include "fieldgen/rng.hpp"
#include "json.hpp"

namespace fieldgen {

static_assert(std::endian::native == std::endian::little, "sample files are written in host byte order");

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr char kMagic[8] = {'F', 'G', 'S', 'A', 'M', 'P', 'L', 'E'};
constexpr std::size_t kHeaderBytes = 16;
constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;

template <typename V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

template <typename V>
V get(const std::string& in, std::size_t offset) {
  V v;
  std::memcpy(&v, in.data() + offset, sizeof(V));
  return v;
}

json geometry_json(const SourceGeometrySpec& g) {
  return {{"x", g.x}, {"y", g.y}, {"width", g.width}, {"height", g.height}, {"amplitude", g.amplitude},
          {"wavelength", g.wavelength}};
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "heldout"; }

std::string sample_name(std::size_t index) {
  std::ostringstream ss;
  ss << "samples/" << std::setw(6) << std::setfill('0') << index << ".bin";
  return ss.str();
}

}  // namespace

void DatasetConfig::validate() const {
  if (size < 16 || size % 8 != 0) throw ConfigError("dataset size must be a multiple of 8 and at least 16");
  if (min_extent < 1 || max_extent < min_extent) throw ConfigError("source extents need 1 <= min_extent <= max_extent");
  if (max_extent + 2 * pml_thickness > size) throw ConfigError("max_extent does not fit inside the absorbing layer");
  if (!(clip_amplitude > 0.0)) throw ConfigError("clip_amplitude must be positive");
  if (!(amplitude > 0.0) || !(wavelength > 0.0)) throw ConfigError("source amplitude and wavelength must be positive");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) throw ConfigError("heldout_fraction must be in [0, 1)");
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].split == split) out.push_back(i);
  return out;
}

std::string encode_sample(const BoundarySample& s) {
  const std::size_t H = s.sketch.height, W = s.sketch.width;
  auto check = [&](const Image& img, std::size_t c, const char* name) {
    if (img.channels != c || img.height != H || img.width != W) {
      throw DimensionError(std::string("sample ") + name + " has the wrong extents");
    }
  };
  check(s.sketch, 1, "sketch");
  check(s.edge, 1, "edge");
  check(s.spatial_ref, 3, "spatial_ref");
  check(s.target, 3, "target");
  json meta = {{"height", H},
               {"width", W},
               {"seed", s.seed},
               {"geometry", geometry_json(s.geometry)},
               {"tensors", json::array({{{"name", "sketch"}, {"shape", {1, H, W}}},
                                        {{"name", "edge"}, {"shape", {1, H, W}}},
                                        {{"name", "spatial_ref"}, {"shape", {3, H, W}}},
                                        {{"name", "target"}, {"shape", {3, H, W}}}})}};
  const std::string text = meta.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kSampleFormatVersion);
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const Image* img : {&s.sketch, &s.edge, &s.spatial_ref, &s.target}) {
    out.append(reinterpret_cast<const char*>(img->pixels.data()), img->pixels.size() * sizeof(float));
  }
  return out;
}

BoundarySample decode_sample(const std::string& bytes) {
  if (bytes.size() < kHeaderBytes + 8) throw CorruptionError("sample file truncated inside the header");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("not a sample file (bad magic)");
  const auto version = get<std::uint32_t>(bytes, 8);
  if (version != kSampleFormatVersion) {
    throw FormatError("sample format version " + std::to_string(version) + " is not supported");
  }
  const auto text_len = get<std::uint64_t>(bytes, kHeaderBytes);
  const std::size_t payload = kHeaderBytes + 8;
  if (text_len > bytes.size() - payload) throw CorruptionError("sample file truncated inside the metadata");
  json meta;
  try {
    meta = json::parse(bytes.begin() + static_cast<long>(payload), bytes.begin() + static_cast<long>(payload + text_len));
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("sample metadata unreadable: ") + e.what());
  }
  BoundarySample s;
  try {
    const std::size_t H = meta.at("height"), W = meta.at("width");
    s.seed = meta.at("seed");
    const json& g = meta.at("geometry");
    s.geometry = {g.at("x"), g.at("y"), g.at("width"), g.at("height"), g.at("amplitude"), g.at("wavelength")};
    s.sketch = Image(1, H, W);
    s.edge = Image(1, H, W);
    s.spatial_ref = Image(3, H, W);
    s.target = Image(3, H, W);
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("sample metadata incomplete: ") + e.what());
  }
  std::size_t offset = payload + text_len;
  const std::size_t need = (s.sketch.pixels.size() + s.edge.pixels.size() + s.spatial_ref.pixels.size() +
                            s.target.pixels.size()) * sizeof(float);
  if (bytes.size() - offset != need) {
    throw CorruptionError("sample payload has " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                          std::to_string(need));
  }
  for (Image* img : {&s.sketch, &s.edge, &s.spatial_ref, &s.target}) {
    const std::size_t n = img->pixels.size() * sizeof(float);
    std::memcpy(img->pixels.data(), bytes.data() + offset, n);
    offset += n;
  }
  return s;
}

void write_sample(const BoundarySample& sample, const fs::path& path) { write_file(path, encode_sample(sample)); }

BoundarySample read_sample(const fs::path& path, const std::string& expected_sha256) {
  const std::string bytes = read_file(path);
  if (!expected_sha256.empty() && sha256_hex(std::as_bytes(std::span(bytes))) != expected_sha256) {
    throw CorruptionError("digest mismatch for " + path.string());
  }
  return decode_sample(bytes);
}

void write_manifest(const DatasetManifest& m, const fs::path& dir) {
  json entries = json::array();
  for (const auto& e : m.entries) entries.push_back({{"file", e.file}, {"sha256", e.sha256}, {"split", split_name(e.split)}});
  json j = {{"format_version", m.format_version}, {"count", m.count()}, {"height", m.height},
            {"width", m.width}, {"seed", m.seed}, {"samples", entries}};
  write_file(dir / "manifest.json", j.dump(2) + "\n");
}

DatasetManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw DataError("no manifest.json in " + dir.string());
  DatasetManifest m;
  try {
    const json j = json::parse(read_file(path));
    m.format_version = j.at("format_version");
    if (m.format_version != kManifestFormatVersion) {
      throw FormatError("manifest format version " + std::to_string(m.format_version) + " is not supported");
    }
    m.height = j.at("height");
    m.width = j.at("width");
    m.seed = j.at("seed");
    for (const auto& e : j.at("samples")) {
      const std::string split = e.at("split");
      if (split != "train" && split != "heldout") throw CorruptionError("unknown split '" + split + "' in manifest");
      m.entries.push_back({e.at("file"), e.at("sha256"), split == "train" ? Split::Train : Split::Heldout});
    }
    if (j.at("count").get<std::size_t>() != m.entries.size()) throw CorruptionError("manifest count disagrees with its entries");
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("manifest unreadable: ") + e.what());
  }
  return m;
}

void verify_dataset(const fs::path& dir, const DatasetManifest& m) {
  std::set<std::string> listed;
  for (const auto& e : m.entries) {
    if (!listed.insert(e.file).second) throw CorruptionError("manifest lists " + e.file + " twice");
    const fs::path p = dir / e.file;
    if (!fs::exists(p)) throw CorruptionError("missing sample file " + e.file);
    if (sha256_file(p) != e.sha256) throw CorruptionError("digest mismatch for " + e.file);
  }
  const fs::path samples = dir / "samples";
  if (fs::exists(samples)) {
    for (const auto& f : fs::directory_iterator(samples)) {
      const std::string rel = "samples/" + f.path().filename().string();
      if (!listed.count(rel)) throw CorruptionError("unlisted file " + rel + " in dataset");
    }
  }
}

SourceGeometrySpec sample_geometry(const DatasetConfig& c, std::size_t index) {
  Rng rng(derive_seed(c.seed, index));
  const std::size_t span = c.max_extent - c.min_extent + 1;
  SourceGeometrySpec g;
  g.width = c.min_extent + rng.below(span);
  g.height = c.min_extent + rng.below(span);
  const std::size_t interior = c.size - 2 * c.pml_thickness;
  g.x = c.pml_thickness + rng.below(interior - g.width + 1);
  g.y = c.pml_thickness + rng.below(interior - g.height + 1);
  g.amplitude = c.amplitude / std::sqrt(static_cast<double>(g.width * g.height));
  g.wavelength = c.wavelength;
  return g;
}

BoundarySample generate_sample(const DatasetConfig& c, std::size_t index) {
  const SourceGeometrySpec g = sample_geometry(c, index);
  fdtd::SimulationConfig sim;
  sim.nx = c.size;
  sim.ny = c.size;
  sim.n_steps = c.n_steps;
  sim.source = g;
  sim.pml_thickness = c.pml_thickness;
  sim.pml_order = c.pml_order;
  sim.pml_sigma_max = c.pml_sigma_max;
  const std::uint64_t seed = derive_seed(c.seed, index);
  BoundarySample s = make_boundary_inputs(g, c.size, c.size);
  s.seed = seed;
  s.target = fdtd::snapshot_to_image(fdtd::run(sim, seed), c.clip_amplitude);
  return s;
}

std::vector<Split> assign_splits(std::size_t count, double heldout_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, kSplitStream));
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto held = static_cast<std::size_t>(std::llround(heldout_fraction * static_cast<double>(count)));
  std::vector<Split> splits(count, Split::Train);
  for (std::size_t k = 0; k < held; ++k) splits[order[k]] = Split::Heldout;
  return splits;
}

DatasetManifest generate_dataset(const DatasetConfig& c, const fs::path& dir, std::size_t workers) {
  c.validate();
  fs::create_directories(dir / "samples");
  DatasetManifest m;
  m.height = c.size;
  m.width = c.size;
  m.seed = c.seed;
  m.entries.resize(c.count);
  const std::vector<Split> splits = assign_splits(c.count, c.heldout_fraction, c.seed);
  parallel_for(c.count, workers, [&](std::size_t i) {
    const std::string bytes = encode_sample(generate_sample(c, i));
    const std::string name = sample_name(i);
    write_file(dir / name, bytes);
    m.entries[i] = {name, sha256_hex(std::as_bytes(std::span(bytes))), splits[i]};
  });
  write_manifest(m, dir);
  return m;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.manifest = read_manifest(dir);
  verify_dataset(dir, d.manifest);
  d.samples.resize(d.manifest.count());
  parallel_for(d.manifest.count(), worker_count(), [&](std::size_t i) {
    const auto& e = d.manifest.entries[i];
    d.samples[i] = read_sample(dir / e.file, e.sha256);
    if (d.samples[i].sketch.height != d.manifest.height || d.samples[i].sketch.width != d.manifest.width) {
      throw CorruptionError(e.file + " extents disagree with the manifest");
    }
  });
  return d;
}

}  // namespace fieldgen
