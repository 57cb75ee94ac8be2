#include "fieldgen/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fieldgen/digest.hpp"
#include "fieldgen/errors.hpp"
#include "json.hpp"

namespace fieldgen {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(learning_rate >= 0.0) || !(vae_learning_rate >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(weight_decay >= 0.0) || !(kl_weight >= 0.0)) throw ConfigError("weight decay and KL weight must be >= 0");
  const LossWeights& w = weights;
  if (!(w.diff >= 0 && w.recon >= 0 && w.edge >= 0 && w.perc >= 0 && w.prior >= 0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!(blend_horizon > 0.0)) throw ConfigError("train.blend_horizon must be positive");
  if (timesteps < 2) throw ConfigError("train.timesteps must be at least 2");
  if (!(condition_dropout >= 0.0 && condition_dropout <= 1.0)) throw ConfigError("train.condition_dropout must lie in [0, 1]");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (checkpoint_every == 0) throw ConfigError("train.checkpoint_every must be positive");
}

RunConfig RunConfig::desk() {
  RunConfig c;
  // 32 of 200 samples held out
  c.dataset.heldout_fraction = 0.16;
  c.train.learning_rate = 3e-4;
  c.train.eval_every = 10;
  return c;
}

RunConfig RunConfig::paper() {
  RunConfig c;
  c.profile = "paper";
  c.dataset.count = 100000;
  c.dataset.heldout_fraction = 0.01;
  c.dataset.size = 256;
  c.dataset.max_extent = 48;
  c.dit.latent_size = 32;
  c.dit.image_size = 256;
  c.dit.dim = 1024;
  c.dit.depth = 12;
  c.dit.heads = 16;
  c.train.learning_rate = 1e-5;
  c.train.epochs = 1820;
  return c;
}

namespace {

// Reads known keys from one JSON object and rejects everything else.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    const std::string name = join(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name + " must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(name + " must be a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(name + " must be a number");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(name + " must be a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw ConfigError(name + " must be an array");
      out.clear();
      for (const auto& e : v) {
        if (!e.is_number_unsigned()) throw ConfigError(name + " entries must be non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, join(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + join(it.key()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_dataset(Section s, DatasetConfig& d) {
  s.get("count", d.count);
  s.get("size", d.size);
  s.get("n_steps", d.n_steps);
  s.get("pml_thickness", d.pml_thickness);
  s.get("pml_order", d.pml_order);
  s.get("pml_sigma_max", d.pml_sigma_max);
  s.get("wavelength", d.wavelength);
  s.get("amplitude", d.amplitude);
  s.get("clip_amplitude", d.clip_amplitude);
  s.get("min_extent", d.min_extent);
  s.get("max_extent", d.max_extent);
  s.get("heldout_fraction", d.heldout_fraction);
  s.get("seed", d.seed);
  s.finish();
}

void read_model(Section s, VaeConfig& v, DiTConfig& d) {
  Section vs = s.sub("vae");
  vs.get("base_width", v.base_width);
  vs.get("latent_channels", v.latent_channels);
  vs.finish();
  Section ds = s.sub("dit");
  ds.get("latent_size", d.latent_size);
  ds.get("grid", d.grid);
  ds.get("dim", d.dim);
  ds.get("depth", d.depth);
  ds.get("heads", d.heads);
  ds.get("scales", d.scales);
  ds.get("mlp_ratio", d.mlp_ratio);
  ds.get("spatial_hidden", d.spatial_hidden);
  ds.get("cond_width", d.cond_width);
  ds.finish();
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.get("batch_size", t.batch_size);
  s.get("learning_rate", t.learning_rate);
  s.get("weight_decay", t.weight_decay);
  s.get("epochs", t.epochs);
  s.get("vae_epochs", t.vae_epochs);
  s.get("vae_learning_rate", t.vae_learning_rate);
  s.get("kl_weight", t.kl_weight);
  Section w = s.sub("loss_weights");
  w.get("diff", t.weights.diff);
  w.get("recon", t.weights.recon);
  w.get("edge", t.weights.edge);
  w.get("perc", t.weights.perc);
  w.get("prior", t.weights.prior);
  w.finish();
  s.get("blend_horizon", t.blend_horizon);
  s.get("timesteps", t.timesteps);
  s.get("condition_dropout", t.condition_dropout);
  s.get("grad_clip", t.grad_clip);
  s.get("seed", t.seed);
  s.get("checkpoint_every", t.checkpoint_every);
  s.get("eval_every", t.eval_every);
  s.finish();
}

void read_sample(Section s, SampleSection& out) {
  s.get("steps", out.sampler.steps);
  s.get("guidance", out.sampler.guidance);
  s.get("clip_x0", out.sampler.clip_x0);
  s.get("seed", out.sampler.seed);
  Section g = s.sub("source");
  g.get("x", out.source.x);
  g.get("y", out.source.y);
  g.get("width", out.source.width);
  g.get("height", out.source.height);
  g.finish();
  s.finish();
}

json scales_json(const std::vector<std::size_t>& v) { return json(v); }

json dataset_json(const DatasetConfig& d) {
  return {{"count", d.count},
          {"size", d.size},
          {"n_steps", d.n_steps},
          {"pml_thickness", d.pml_thickness},
          {"pml_order", d.pml_order},
          {"pml_sigma_max", d.pml_sigma_max},
          {"wavelength", d.wavelength},
          {"amplitude", d.amplitude},
          {"clip_amplitude", d.clip_amplitude},
          {"min_extent", d.min_extent},
          {"max_extent", d.max_extent},
          {"heldout_fraction", d.heldout_fraction},
          {"seed", d.seed}};
}

json model_json(const VaeConfig& v, const DiTConfig& d) {
  return {{"vae", {{"base_width", v.base_width}, {"latent_channels", v.latent_channels}}},
          {"dit",
           {{"latent_size", d.latent_size},
            {"grid", d.grid},
            {"dim", d.dim},
            {"depth", d.depth},
            {"heads", d.heads},
            {"scales", scales_json(d.scales)},
            {"mlp_ratio", d.mlp_ratio},
            {"spatial_hidden", d.spatial_hidden},
            {"cond_width", d.cond_width}}}};
}

json train_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"weight_decay", t.weight_decay},
          {"epochs", t.epochs},
          {"vae_epochs", t.vae_epochs},
          {"vae_learning_rate", t.vae_learning_rate},
          {"kl_weight", t.kl_weight},
          {"loss_weights",
           {{"diff", t.weights.diff},
            {"recon", t.weights.recon},
            {"edge", t.weights.edge},
            {"perc", t.weights.perc},
            {"prior", t.weights.prior}}},
          {"blend_horizon", t.blend_horizon},
          {"timesteps", t.timesteps},
          {"condition_dropout", t.condition_dropout},
          {"grad_clip", t.grad_clip},
          {"seed", t.seed},
          {"checkpoint_every", t.checkpoint_every},
          {"eval_every", t.eval_every}};
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section root(j, "");
  std::string profile = "desk";
  root.get("profile", profile);
  RunConfig c;
  if (profile == "desk") {
    c = desk();
  } else if (profile == "paper") {
    c = paper();
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
  }
  try {
    read_dataset(root.sub("dataset"), c.dataset);
    read_model(root.sub("model"), c.vae, c.dit);
    read_train(root.sub("train"), c.train);
    read_sample(root.sub("sample"), c.sample);
    Section e = root.sub("eval");
    e.get("max_cases", c.eval.max_cases);
    e.finish();
    Section p = root.sub("paths");
    std::string data = c.data_dir.string(), run = c.run_dir.string();
    p.get("data", data);
    p.get("run", run);
    p.finish();
    c.data_dir = (base_dir / data).lexically_normal();
    c.run_dir = (base_dir / run).lexically_normal();
    root.finish();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value out of range: ") + e.what());
  }
  c.dit.latent_channels = c.vae.latent_channels;
  c.dit.image_size = c.dataset.size;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

void RunConfig::validate() const {
  try {
    dataset.validate();
    vae.validate();
    dit.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  if (dit.latent_channels != vae.latent_channels) throw ConfigError("DiT and VAE latent channels differ");
  if (dit.latent_size * vae.compression() != dataset.size) {
    throw ConfigError("model.dit.latent_size * 8 must equal dataset.size");
  }
  if (sample.sampler.steps == 0 || sample.sampler.steps > train.timesteps) {
    throw ConfigError("sample.steps must lie in [1, train.timesteps]");
  }
  if (!(sample.sampler.clip_x0 >= 0.0)) throw ConfigError("sample.clip_x0 must be non-negative");
  const auto& s = sample.source;
  if (s.width == 0 || s.height == 0 || s.x + s.width > dataset.size || s.y + s.height > dataset.size) {
    throw ConfigError("sample.source must be a non-empty rectangle inside the image");
  }
}

std::string RunConfig::to_json() const {
  json j = {{"profile", profile},
            {"dataset", dataset_json(dataset)},
            {"model", model_json(vae, dit)},
            {"train", train_json(train)},
            {"sample",
             {{"steps", sample.sampler.steps},
              {"guidance", sample.sampler.guidance},
              {"clip_x0", sample.sampler.clip_x0},
              {"seed", sample.sampler.seed},
              {"source",
               {{"x", sample.source.x},
                {"y", sample.source.y},
                {"width", sample.source.width},
                {"height", sample.source.height}}}}},
            {"eval", {{"max_cases", eval.max_cases}}},
            {"paths", {{"data", data_dir.string()}, {"run", run_dir.string()}}}};
  return j.dump(2);
}

std::string RunConfig::training_digest() const {
  json t = train_json(train);
  t.erase("epochs");
  t.erase("checkpoint_every");
  t.erase("eval_every");
  const json j = {{"dataset", dataset_json(dataset)}, {"model", model_json(vae, dit)}, {"train", t}};
  return sha256_hex(j.dump());
}

}  // namespace fieldgen
