#pragma once

#include <cstddef>
#include <cstdint>

#include "fieldgen/boundary.hpp"
#include "fieldgen/diffusion.hpp"
#include "fieldgen/dit.hpp"
#include "fieldgen/image.hpp"
#include "fieldgen/vae.hpp"

namespace fieldgen {

// Everything trainable, in 32-bit floats.
struct Models {
  Vae<float> vae;
  ConditionalPrior<float> prior;
  DiT<float> dit;
  // Multiplies VAE means into the diffusion latent space.
  double latent_scale = 1.0;

  static Models create(const VaeConfig& vae, const DiTConfig& dit, std::uint64_t seed);
  nn::ParamSet<float> vae_params() const;
  // Prior and transformer: what the diffusion phase trains.
  nn::ParamSet<float> diffusion_params() const;
  nn::ParamSet<float> all_params() const;
};

TensorF image_to_tensor(const Image& img);
Image tensor_to_image(const TensorF& t);
TensorF condition_tensor(const BoundarySample& sample);

// Diffusion-space latent of a target: latent_scale * mu, detached.
TensorF encode_latent(const Models& models, const TensorF& target);

struct TrainingExample {
  TensorF cond;    // [9, H, W]
  TensorF target;  // [3, H, W]
  TensorF z_true;  // diffusion-space latent, detached
};

struct StepNoise {
  std::size_t t = 0;
  TensorF eps;
  // Replace the condition tokens by the learned null tokens.
  bool drop_condition = false;
};

struct LossResult {
  TensorF total;
  LossBreakdown terms;
};

// Composite objective for one example; `alpha` blends z_true with the prior.
LossResult training_loss(const Models& models, const TrainingExample& example, const StepNoise& noise, double alpha,
                         const LossWeights& weights, const PerceptualNet<float>& perceptual,
                         const NoiseSchedule& schedule);

struct SamplerConfig {
  std::size_t steps = 25;
  double guidance = 2.5;
  // Clamp each predicted clean latent to [-clip_x0, clip_x0]; 0 disables.
  double clip_x0 = 4.0;
  std::uint64_t seed = 0;
};

// Seeded unit-normal start, DDIM over the evenly spaced sub-sequence with
// guided noise at every step, then decode. With clipping, the noise estimate
// is re-derived from the clamped clean latent before each step. Condition tokens are encoded once.
// Noise estimate consistent with predict_x0 clamped to [-limit, limit].
TensorF clip_noise_estimate(const TensorF& z_t, const TensorF& eps_hat, std::size_t t, double limit,
                            const NoiseSchedule& schedule);

Image sample_field(const Models& models, const TensorF& cond, const SamplerConfig& config,
                   const NoiseSchedule& schedule);

}  // namespace fieldgen
