#include "fieldgen/vae.hpp"

#include <algorithm>
#include <string>

#include "fieldgen/errors.hpp"
#include "fieldgen/ops.hpp"

namespace fieldgen {

void VaeConfig::validate() const {
  if (in_channels == 0 || base_width == 0 || latent_channels == 0) throw ConfigError("VAE widths must be positive");
  if (stages != 3) throw ConfigError("VAE needs exactly 3 stages for 8x compression");
}

template <typename T>
ConvEncoder<T> ConvEncoder<T>::create(std::size_t in_channels, const VaeConfig& cfg, std::size_t out_channels,
                                      Rng& rng) {
  cfg.validate();
  ConvEncoder e;
  e.compression = cfg.compression();
  e.conv_in = nn::Conv2d<T>::create(in_channels, cfg.base_width, 3, 1, rng);
  std::size_t width = cfg.base_width;
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    e.stages.push_back(nn::Conv2d<T>::create(width, cfg.stage_width(s), 3, 1, rng));
    width = cfg.stage_width(s);
  }
  e.conv_out = nn::Conv2d<T>::create(width, out_channels, 1, 1, rng);
  return e;
}

template <typename T>
Tensor<T> ConvEncoder<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(0) != conv_in.weight.dim(1)) {
    throw DimensionError("encoder expects [" + std::to_string(conv_in.weight.dim(1)) + ",H,W], got " +
                         shape_str(x.shape()));
  }
  if (x.dim(1) % compression != 0 || x.dim(2) % compression != 0) {
    throw DimensionError("encoder input extents " + shape_str(x.shape()) + " are not divisible by " +
                         std::to_string(compression));
  }
  Tensor<T> h = ops::silu(conv_in(x));
  for (const auto& conv : stages) h = ops::silu(conv(ops::avg_pool2x(h)));
  return conv_out(h);
}

template <typename T>
void ConvEncoder<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  conv_in.collect(set, prefix + ".conv_in");
  for (std::size_t s = 0; s < stages.size(); ++s) stages[s].collect(set, prefix + ".stage" + std::to_string(s));
  conv_out.collect(set, prefix + ".conv_out");
}

template <typename T>
Vae<T> Vae<T>::create(const VaeConfig& cfg, Rng& rng) {
  cfg.validate();
  Vae v;
  v.config = cfg;
  v.encoder = ConvEncoder<T>::create(cfg.in_channels, cfg, 2 * cfg.latent_channels, rng);
  v.dec_in = nn::Conv2d<T>::create(cfg.latent_channels, cfg.stage_width(cfg.stages - 1), 1, 1, rng);
  for (std::size_t s = cfg.stages; s-- > 0;) {
    const std::size_t out = s == 0 ? cfg.base_width : cfg.stage_width(s - 1);
    v.dec_stages.push_back(nn::Conv2d<T>::create(cfg.stage_width(s), out, 3, 1, rng));
  }
  v.dec_out = nn::Conv2d<T>::create(cfg.base_width, cfg.in_channels, 3, 1, rng);
  return v;
}

template <typename T>
Encoded<T> Vae<T>::encode(const Tensor<T>& x) const {
  Tensor<T> h = encoder(x);
  const std::size_t L = config.latent_channels;
  return {ops::slice_dim0(h, 0, L), ops::slice_dim0(h, L, L)};
}

template <typename T>
Tensor<T> Vae<T>::decode(const Tensor<T>& z) const {
  if (z.rank() != 3 || z.dim(0) != config.latent_channels) {
    throw DimensionError("decode expects [" + std::to_string(config.latent_channels) + ",h,w], got " +
                         shape_str(z.shape()));
  }
  Tensor<T> h = ops::silu(dec_in(z));
  for (const auto& conv : dec_stages) h = ops::silu(conv(ops::upsample_nearest2x(h)));
  return ops::sigmoid(dec_out(h));
}

template <typename T>
void Vae<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  encoder.collect(set, prefix + ".enc");
  dec_in.collect(set, prefix + ".dec_in");
  for (std::size_t s = 0; s < dec_stages.size(); ++s) dec_stages[s].collect(set, prefix + ".dec" + std::to_string(s));
  dec_out.collect(set, prefix + ".dec_out");
}

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& noise) {
  if (mu.shape() != logvar.shape() || mu.shape() != noise.shape()) {
    throw DimensionError("reparameterize: mu, logvar and noise shapes differ");
  }
  return ops::add(mu, ops::mul(ops::exp(ops::scale(logvar, T(0.5))), noise));
}

template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar) {
  if (mu.shape() != logvar.shape()) throw DimensionError("kl_divergence: shape mismatch");
  Tensor<T> terms = ops::sub(ops::add(ops::square(mu), ops::exp(logvar)), ops::add_scalar(logvar, T(1)));
  return ops::scale(ops::sum(terms), T(0.5));
}

template <typename T>
ConditionalPrior<T> ConditionalPrior<T>::create(const VaeConfig& cfg, Rng& rng) {
  return {ConvEncoder<T>::create(9, cfg, cfg.latent_channels, rng)};
}

template <typename T>
Tensor<T> ConditionalPrior<T>::operator()(const Tensor<T>& cond) const {
  if (cond.rank() != 3 || cond.dim(0) != 9) {
    throw DimensionError("conditional prior expects 9 channels, got " + shape_str(cond.shape()));
  }
  return encoder(cond);
}

template <typename T>
void ConditionalPrior<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  encoder.collect(set, prefix + ".enc");
}

double blend_alpha(double epoch, const BlendSchedule& schedule) {
  if (epoch < 0) throw ParameterError("blend epoch must be non-negative");
  return std::clamp(1.0 - epoch / schedule.horizon, 0.0, 1.0);
}

template <typename T>
Tensor<T> blend_latents(const Tensor<T>& z_true, const Tensor<T>& z_prior, double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("blend weight must lie in [0, 1]");
  if (z_true.shape() != z_prior.shape()) throw DimensionError("blend_latents: shape mismatch");
  if (a == 1.0) return ops::add(z_true, ops::scale(z_prior, T(0)));
  if (a == 0.0) return ops::add(ops::scale(z_true, T(0)), z_prior);
  return ops::add(ops::scale(z_true, static_cast<T>(a)), ops::scale(z_prior, static_cast<T>(1.0 - a)));
}

#define FIELDGEN_INSTANTIATE_VAE(T)                                                        \
  template struct ConvEncoder<T>;                                                          \
  template struct Vae<T>;                                                                  \
  template struct ConditionalPrior<T>;                                                     \
  template Tensor<T> reparameterize(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> kl_divergence(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> blend_latents(const Tensor<T>&, const Tensor<T>&, double);

FIELDGEN_INSTANTIATE_VAE(float)
FIELDGEN_INSTANTIATE_VAE(double)

}  // namespace fieldgen
