#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fieldgen/nn.hpp"
#include "fieldgen/tensor.hpp"

namespace fieldgen {

struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta, alpha, alpha_bar;
};

// Linear beta from 1e-4 to 2e-2.
NoiseSchedule build_schedule(std::size_t steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
template <typename T>
Tensor<T> q_sample(const Tensor<T>& z0, std::size_t t, const Tensor<T>& eps, const NoiseSchedule& sched);

// (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
template <typename T>
Tensor<T> predict_x0(const Tensor<T>& z_t, std::size_t t, const Tensor<T>& eps_hat, const NoiseSchedule& sched);

// Deterministic DDIM update to t_prev. A negative t_prev means the end of the
// chain (abar = 1), which returns the x0 estimate.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& z_t, const Tensor<T>& eps_hat, std::size_t t, long t_prev,
                    const NoiseSchedule& sched);

// Descending, evenly spaced: T-1, T-1-s, ..., with stride s = T / steps.
std::vector<std::size_t> ddim_timesteps(std::size_t total, std::size_t steps);

// (1 - w) * eps_uncond + w * eps_cond, which is exact at w = 0 and w = 1.
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_uncond, const Tensor<T>& eps_cond, double w);

struct LossWeights {
  double diff = 1.0;
  double recon = 0.3;
  double edge = 0.1;
  double perc = 0.3;
  double prior = 0.4;
};

struct LossBreakdown {
  double diff = 0, recon = 0, edge = 0, perc = 0, prior = 0, total = 0;
};

double weighted_total(const LossBreakdown& terms, const LossWeights& w);

// Sobel gradient magnitude of the channel mean, sqrt(gx^2 + gy^2 + 1e-6),
// zero padding. [C, H, W] -> [1, H, W].
template <typename T>
Tensor<T> sobel_magnitude(const Tensor<T>& image);

// Frozen random conv pyramid standing in for a learned perceptual metric.
// Weights are derived from a fixed seed and are not trained or saved.
template <typename T>
struct PerceptualNet {
  std::vector<nn::Conv2d<T>> stages;

  static PerceptualNet create(std::uint64_t seed = 0x70657263ULL);
  // Sum over stages of the mean squared feature difference.
  Tensor<T> distance(const Tensor<T>& a, const Tensor<T>& b) const;
};

}  // namespace fieldgen
