#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "fieldgen/dataset.hpp"
#include "fieldgen/diffusion.hpp"
#include "fieldgen/dit.hpp"
#include "fieldgen/geometry.hpp"
#include "fieldgen/pipeline.hpp"
#include "fieldgen/vae.hpp"

namespace fieldgen {

struct TrainConfig {
  std::size_t batch_size = 4;
  double learning_rate = 1e-5;
  double weight_decay = 0.01;
  std::size_t epochs = 30;
  // VAE pretraining before the diffusion epochs; the VAE is frozen afterwards.
  std::size_t vae_epochs = 20;
  double vae_learning_rate = 1e-3;
  double kl_weight = 1e-4;
  LossWeights weights;
  double blend_horizon = 1000.0;
  std::size_t timesteps = 1000;
  // Probability of training a step on the null tokens instead of the condition.
  double condition_dropout = 0.1;
  // Global gradient-norm cap per optimizer step; 0 disables.
  double grad_clip = 1.0;
  std::uint64_t seed = 7;
  std::size_t checkpoint_every = 5;
  // Held-out evaluation cadence in epochs; 0 evaluates only at the start and end.
  std::size_t eval_every = 0;

  void validate() const;
};

struct SampleSection {
  SamplerConfig sampler;
  SourceGeometrySpec source{26, 26, 12, 12};
};

struct EvalConfig {
  // Upper bound on held-out cases; 0 means all.
  std::size_t max_cases = 0;
};

struct RunConfig {
  std::string profile = "desk";
  DatasetConfig dataset;
  VaeConfig vae;
  DiTConfig dit;
  TrainConfig train;
  SampleSection sample;
  EvalConfig eval;
  std::filesystem::path data_dir = "data";
  std::filesystem::path run_dir = "run";

  static RunConfig desk();
  static RunConfig paper();

  // Profile defaults overlaid with the given JSON text. Unknown keys, wrong
  // types and invalid values raise ConfigError. Relative paths resolve
  // against `base_dir`.
  static RunConfig parse(const std::string& json_text, const std::filesystem::path& base_dir = ".");
  static RunConfig load(const std::filesystem::path& path);

  void validate() const;
  // Canonical JSON of every field, paths included.
  std::string to_json() const;
  // SHA-256 over the settings that shape training: dataset, model and train
  // sections except the epoch count and the checkpoint/eval cadence.
  std::string training_digest() const;
};

}  // namespace fieldgen
