#include "fieldgen/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "fieldgen/errors.hpp"
#include "fieldgen/fileio.hpp"
#include "json.hpp"

namespace fieldgen {

static_assert(std::endian::native == std::endian::little, "checkpoints are written in host byte order");

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'F', 'G', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::size_t kFixedBytes = 24;

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

void put_floats(std::string& out, std::span<const float> v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

std::string hex_bits(double v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

double from_hex_bits(const std::string& s) { return std::bit_cast<double>(std::stoull(s, nullptr, 16)); }

}  // namespace

std::string encode_checkpoint(const Models& models, const TrainingState& state, const std::string& config_digest) {
  const auto params = models.all_params();
  const auto diffusion = models.diffusion_params();
  const auto& opt = state.optimizer;
  const bool has_moments = !opt.first_moment.empty();
  if (has_moments && opt.first_moment.size() != diffusion.items().size()) {
    throw DimensionError("optimizer state does not match the diffusion parameters");
  }
  json tensors = json::array();
  for (const auto& p : params.items()) tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  const auto& c = opt.config;
  json header = {{"format_version", kCheckpointFormatVersion},
                 {"config_digest", config_digest},
                 {"epoch", state.epoch},
                 {"step", state.step},
                 {"rng_state", state.rng_state},
                 {"latent_scale", hex_bits(models.latent_scale)},
                 {"tensors", tensors},
                 {"optimizer",
                  {{"step", opt.step},
                   {"has_moments", has_moments},
                   {"learning_rate", hex_bits(c.learning_rate)},
                   {"beta1", hex_bits(c.beta1)},
                   {"beta2", hex_bits(c.beta2)},
                   {"epsilon", hex_bits(c.epsilon)},
                   {"weight_decay", hex_bits(c.weight_decay)}}}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& p : params.items()) put_floats(out, p.tensor.data());
  if (has_moments) {
    for (const auto& m : opt.first_moment) put_floats(out, m);
    for (const auto& m : opt.second_moment) put_floats(out, m);
  }
  return out;
}

CheckpointInfo decode_checkpoint(const std::string& bytes, Models& models, const std::string& expected_digest) {
  if (bytes.size() < kFixedBytes) throw CorruptionError("checkpoint truncated inside the header");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("not a checkpoint (bad magic)");
  CheckpointInfo info;
  info.format_version = get<std::uint32_t>(bytes, 8);
  if (info.format_version != kCheckpointFormatVersion) {
    throw FormatError("checkpoint format version " + std::to_string(info.format_version) + " is not supported");
  }
  const auto text_len = get<std::uint64_t>(bytes, 16);
  if (text_len > bytes.size() - kFixedBytes) throw CorruptionError("checkpoint truncated inside the metadata");
  json header;
  try {
    header = json::parse(bytes.substr(kFixedBytes, text_len));
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint metadata unreadable: ") + e.what());
  }
  try {
    info.config_digest = header.at("config_digest").get<std::string>();
    if (!expected_digest.empty() && info.config_digest != expected_digest) {
      throw ConfigError("checkpoint was trained under config digest " + info.config_digest +
                        ", current config digest is " + expected_digest + "; refusing to resume");
    }
    info.state.epoch = header.at("epoch").get<std::size_t>();
    info.state.step = header.at("step").get<std::uint64_t>();
    info.state.rng_state = header.at("rng_state").get<std::string>();
    const json& o = header.at("optimizer");
    auto& c = info.state.optimizer.config;
    c.learning_rate = from_hex_bits(o.at("learning_rate"));
    c.beta1 = from_hex_bits(o.at("beta1"));
    c.beta2 = from_hex_bits(o.at("beta2"));
    c.epsilon = from_hex_bits(o.at("epsilon"));
    c.weight_decay = from_hex_bits(o.at("weight_decay"));
    info.state.optimizer.step = o.at("step").get<std::uint64_t>();
    const bool has_moments = o.at("has_moments").get<bool>();

    const auto params = models.all_params();
    const json& tensors = header.at("tensors");
    if (tensors.size() != params.items().size()) {
      throw CorruptionError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                            std::to_string(params.items().size()));
    }
    std::size_t offset = kFixedBytes + text_len;
    auto take_floats = [&](std::span<float> dst) {
      const std::size_t n = dst.size() * sizeof(float);
      if (bytes.size() - offset < n) throw CorruptionError("checkpoint truncated inside the tensor data");
      std::memcpy(dst.data(), bytes.data() + offset, n);
      offset += n;
    };
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& p = params.items()[i];
      if (tensors[i].at("name") != p.name || tensors[i].at("shape").get<Shape>() != p.tensor.shape()) {
        throw CorruptionError("checkpoint tensor " + tensors[i].at("name").get<std::string>() +
                              " does not match model parameter " + p.name);
      }
    }
    // Read into scratch first so a bad file leaves the models untouched.
    std::vector<std::vector<float>> values;
    for (const auto& p : params.items()) {
      values.emplace_back(p.tensor.numel());
      take_floats(values.back());
    }
    if (has_moments) {
      const auto diffusion = models.diffusion_params();
      for (const auto& p : diffusion.items()) {
        info.state.optimizer.first_moment.emplace_back(p.tensor.numel());
        take_floats(info.state.optimizer.first_moment.back());
      }
      for (const auto& p : diffusion.items()) {
        info.state.optimizer.second_moment.emplace_back(p.tensor.numel());
        take_floats(info.state.optimizer.second_moment.back());
      }
    }
    if (offset != bytes.size()) throw CorruptionError("checkpoint has trailing bytes");
    for (std::size_t i = 0; i < values.size(); ++i) {
      Tensor<float> t = params.items()[i].tensor;
      std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
    }
    models.latent_scale = from_hex_bits(header.at("latent_scale"));
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  return info;
}

void save_checkpoint(const std::filesystem::path& path, const Models& models, const TrainingState& state,
                     const std::string& config_digest) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  write_file(tmp, encode_checkpoint(models, state, config_digest));
  std::filesystem::rename(tmp, path);
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, Models& models, const std::string& expected_digest) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint " + path.string() + " does not exist");
  return decode_checkpoint(read_file(path), models, expected_digest);
}

}  // namespace fieldgen
