#pragma once

#include <cstddef>
#include <vector>

#include "fieldgen/nn.hpp"
#include "fieldgen/rng.hpp"
#include "fieldgen/tensor.hpp"

namespace fieldgen {

struct VaeConfig {
  std::size_t in_channels = 3;
  std::size_t base_width = 16;
  std::size_t latent_channels = 64;
  std::size_t stages = 3;

  void validate() const;
  // Encoder width after each stage: base * 2^s.
  std::size_t stage_width(std::size_t s) const { return base_width << s; }
  std::size_t compression() const { return std::size_t{1} << stages; }
};

// Convolutional encoder shared by the VAE and the conditional prior. Each
// stage halves the extents (2x2 mean pool) and then applies a 3x3 conv.
template <typename T>
struct ConvEncoder {
  nn::Conv2d<T> conv_in;
  std::vector<nn::Conv2d<T>> stages;
  nn::Conv2d<T> conv_out;  // 1x1
  std::size_t compression = 8;

  static ConvEncoder create(std::size_t in_channels, const VaeConfig& cfg, std::size_t out_channels, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

template <typename T>
struct Encoded {
  Tensor<T> mu;
  Tensor<T> logvar;
};

template <typename T>
struct Vae {
  VaeConfig config;
  ConvEncoder<T> encoder;
  nn::Conv2d<T> dec_in;  // 1x1 latent -> widest
  std::vector<nn::Conv2d<T>> dec_stages;
  nn::Conv2d<T> dec_out;

  static Vae create(const VaeConfig& cfg, Rng& rng);
  // x: [3, H, W] with H, W divisible by 8.
  Encoded<T> encode(const Tensor<T>& x) const;
  // z: [latent, h, w] -> [3, 8h, 8w] in (0, 1).
  Tensor<T> decode(const Tensor<T>& z) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

// z = mu + exp(logvar / 2) * noise
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& noise);

// 1/2 sum(mu^2 + exp(logvar) - 1 - logvar) for one sample.
template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar);

// Maps the 9-channel condition tensor directly to a latent of the VAE's shape.
template <typename T>
struct ConditionalPrior {
  ConvEncoder<T> encoder;

  static ConditionalPrior create(const VaeConfig& cfg, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& cond) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

struct BlendSchedule {
  double horizon = 1000.0;
};

// clamp(1 - n / N, 0, 1)
double blend_alpha(double epoch, const BlendSchedule& schedule = {});

// a * z_true + (1 - a) * z_prior, a in [0, 1].
template <typename T>
Tensor<T> blend_latents(const Tensor<T>& z_true, const Tensor<T>& z_prior, double a);

}  // namespace fieldgen
