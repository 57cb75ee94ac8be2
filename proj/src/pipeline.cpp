#include "fieldgen/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "fieldgen/errors.hpp"
#include "fieldgen/ops.hpp"
#include "fieldgen/rng.hpp"

namespace fieldgen {

Models Models::create(const VaeConfig& vae, const DiTConfig& dit, std::uint64_t seed) {
  if (dit.latent_channels != vae.latent_channels) throw ConfigError("DiT and VAE latent channels differ");
  if (dit.latent_size * vae.compression() != dit.image_size) {
    throw ConfigError("DiT latent extent times the VAE compression must equal the image extent");
  }
  Rng vae_rng(derive_seed(seed, 1)), prior_rng(derive_seed(seed, 2)), dit_rng(derive_seed(seed, 3));
  return {Vae<float>::create(vae, vae_rng), ConditionalPrior<float>::create(vae, prior_rng),
          DiT<float>::create(dit, dit_rng), 1.0};
}

nn::ParamSet<float> Models::vae_params() const {
  nn::ParamSet<float> s;
  vae.collect(s, "vae");
  return s;
}

nn::ParamSet<float> Models::diffusion_params() const {
  nn::ParamSet<float> s;
  prior.collect(s, "prior");
  dit.collect(s, "dit");
  return s;
}

nn::ParamSet<float> Models::all_params() const {
  nn::ParamSet<float> s = vae_params();
  s.append(diffusion_params());
  return s;
}

TensorF image_to_tensor(const Image& img) {
  return TensorF::from({img.channels, img.height, img.width}, img.pixels);
}

Image tensor_to_image(const TensorF& t) {
  if (t.rank() != 3) throw DimensionError("image tensor must be [C,H,W]");
  Image img(t.dim(0), t.dim(1), t.dim(2));
  std::copy(t.data().begin(), t.data().end(), img.pixels.begin());
  return img;
}

TensorF condition_tensor(const BoundarySample& sample) { return image_to_tensor(assemble_condition_tensor(sample)); }

TensorF encode_latent(const Models& models, const TensorF& target) {
  NoGradGuard guard;
  return ops::scale(models.vae.encode(target).mu, static_cast<float>(models.latent_scale)).detach();
}

LossResult training_loss(const Models& models, const TrainingExample& ex, const StepNoise& noise, double alpha,
                         const LossWeights& w, const PerceptualNet<float>& perceptual, const NoiseSchedule& sched) {
  const TensorF z_prior = models.prior(ex.cond);
  const TensorF z_mixed = blend_latents(ex.z_true, z_prior, alpha);
  const TensorF z_t = q_sample(z_mixed, noise.t, noise.eps, sched);
  const TensorF tokens = noise.drop_condition ? models.dit.null_tokens : models.dit.encode_condition(ex.cond);
  const TensorF eps_hat = models.dit(z_t, noise.t, tokens);
  const TensorF z0_hat = predict_x0(z_t, noise.t, eps_hat, sched);
  const TensorF decoded = models.vae.decode(ops::scale(z0_hat, static_cast<float>(1.0 / models.latent_scale)));

  const TensorF l_diff = ops::mse_loss(eps_hat, noise.eps);
  const TensorF l_recon = ops::l1_loss(decoded, ex.target);
  const TensorF l_edge = ops::l1_loss(sobel_magnitude(decoded), sobel_magnitude(ex.target));
  const TensorF l_perc = perceptual.distance(decoded, ex.target);
  const TensorF l_prior = ops::mse_loss(z_prior, ex.z_true.detach());

  LossResult r;
  r.total = ops::add(
      ops::add(ops::add(ops::scale(l_diff, static_cast<float>(w.diff)), ops::scale(l_recon, static_cast<float>(w.recon))),
               ops::add(ops::scale(l_edge, static_cast<float>(w.edge)), ops::scale(l_perc, static_cast<float>(w.perc)))),
      ops::scale(l_prior, static_cast<float>(w.prior)));
  r.terms = {l_diff.item(), l_recon.item(), l_edge.item(), l_perc.item(), l_prior.item(), 0.0};
  r.terms.total = weighted_total(r.terms, w);
  return r;
}

TensorF clip_noise_estimate(const TensorF& z_t, const TensorF& eps_hat, std::size_t t, double limit,
                            const NoiseSchedule& schedule) {
  const TensorF x0 = predict_x0(z_t, t, eps_hat, schedule);
  const double ab = schedule.alpha_bar[t];
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<float> out(x0.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double c = std::clamp(static_cast<double>(x0[i]), -limit, limit);
    out[i] = static_cast<float>((z_t[i] - a * c) / b);
  }
  return TensorF::from(z_t.shape(), std::move(out));
}

Image sample_field(const Models& models, const TensorF& cond, const SamplerConfig& config,
                   const NoiseSchedule& schedule) {
  NoGradGuard guard;
  const auto& dc = models.dit.config;
  Rng rng(config.seed);
  std::vector<float> start(dc.latent_channels * dc.latent_size * dc.latent_size);
  for (auto& v : start) v = static_cast<float>(rng.normal());
  TensorF z = TensorF::from({dc.latent_channels, dc.latent_size, dc.latent_size}, std::move(start));

  const TensorF tokens = models.dit.encode_condition(cond);
  const auto ts = ddim_timesteps(schedule.steps, config.steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const TensorF eps_c = models.dit(z, ts[i], tokens);
    const TensorF eps_u = models.dit(z, ts[i], models.dit.null_tokens);
    TensorF eps = cfg_combine(eps_u, eps_c, config.guidance);
    if (config.clip_x0 > 0.0) eps = clip_noise_estimate(z, eps, ts[i], config.clip_x0, schedule);
    const long prev = i + 1 < ts.size() ? static_cast<long>(ts[i + 1]) : -1;
    z = ddim_step(z, eps, ts[i], prev, schedule);
  }
  return tensor_to_image(models.vae.decode(ops::scale(z, static_cast<float>(1.0 / models.latent_scale))));
}

}  // namespace fieldgen
