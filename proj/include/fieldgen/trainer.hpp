#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "fieldgen/config.hpp"
#include "fieldgen/dataset.hpp"
#include "fieldgen/metrics.hpp"
#include "fieldgen/pipeline.hpp"

namespace fieldgen {

inline constexpr const char* kMetricsHeader = "epoch,step,l_diff,l_recon,l_edge,l_perc,l_prior,total,alpha";

struct EvalRecord {
  std::size_t epoch = 0;
  std::vector<metrics::Aggregate> aggregate;

  double mean(const std::string& metric) const;
};

struct TrainSummary {
  std::size_t epochs_completed = 0;
  std::uint64_t steps = 0;
  double latent_scale = 1.0;
  std::vector<EvalRecord> evals;
};

// Train and held-out indices of a manifest; refuses if any file or digest
// appears on both sides.
std::vector<std::size_t> split_indices(const DatasetManifest& manifest, Split split);

// Reconstruction L1 plus kl_weight times the per-element KL, batched AdamW.
// Appends `epoch,step,recon,kl,total` rows to `csv`.
void pretrain_vae(Models& models, const std::vector<TensorF>& targets, const TrainConfig& config,
                  const std::filesystem::path& csv, std::ostream& log);

// 1 / std of the VAE means over the given targets.
double latent_scale(const Models& models, const std::vector<TensorF>& targets);

// Samples every listed case with seed derive_seed(sampler.seed, index) and
// scores it against the stored target. Runs across `workers` threads.
metrics::MetricReport evaluate_cases(const Models& models, const Dataset& data, const std::vector<std::size_t>& indices,
                                     const SamplerConfig& sampler, const NoiseSchedule& schedule, std::size_t workers);

// Full training run into `run_dir`: VAE pretraining (skipped on resume),
// diffusion epochs with periodic checkpoints and held-out evaluation.
TrainSummary run_training(const RunConfig& config, const std::filesystem::path& data_dir,
                          const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& resume,
                          std::ostream& log);

}  // namespace fieldgen
