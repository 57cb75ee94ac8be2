#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fieldgen/optim.hpp"
#include "fieldgen/pipeline.hpp"

namespace fieldgen {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// Training progress stored alongside the parameters.
struct TrainingState {
  std::size_t epoch = 0;  // completed diffusion epochs
  std::uint64_t step = 0;  // optimizer steps taken
  std::string rng_state;
  OptimizerState<float> optimizer;
};

struct CheckpointInfo {
  std::uint32_t format_version = 0;
  std::string config_digest;
  TrainingState state;
};

// Byte image: magic, version, reserved word, header length, JSON header, then
// every parameter of Models::all_params followed by both optimizer moments,
// all little-endian float32.
std::string encode_checkpoint(const Models& models, const TrainingState& state, const std::string& config_digest);

// Loads into models of the same architecture. A non-empty `expected_digest`
// that differs from the stored one raises ConfigError. Unknown versions raise
// FormatError, truncation and shape mismatches CorruptionError.
CheckpointInfo decode_checkpoint(const std::string& bytes, Models& models, const std::string& expected_digest = "");

// Writes through a temporary file and a rename.
void save_checkpoint(const std::filesystem::path& path, const Models& models, const TrainingState& state,
                     const std::string& config_digest);
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Models& models,
                               const std::string& expected_digest = "");

}  // namespace fieldgen
