#include "fieldgen/diffusion.hpp"

#include <cmath>
#include <string>

#include "fieldgen/errors.hpp"
#include "fieldgen/ops.hpp"

namespace fieldgen {

NoiseSchedule build_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 2) throw ParameterError("noise schedule needs at least 2 steps");
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    s.beta[t] = beta_start + (beta_end - beta_start) * static_cast<double>(t) / static_cast<double>(steps - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

namespace {

void check_t(std::size_t t, const NoiseSchedule& s) {
  if (t >= s.steps) throw ParameterError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(s.steps) + ")");
}

}  // namespace

template <typename T>
Tensor<T> q_sample(const Tensor<T>& z0, std::size_t t, const Tensor<T>& eps, const NoiseSchedule& sched) {
  check_t(t, sched);
  if (z0.shape() != eps.shape()) throw DimensionError("q_sample: z0 and eps shapes differ");
  const double ab = sched.alpha_bar[t];
  return ops::add(ops::scale(z0, static_cast<T>(std::sqrt(ab))), ops::scale(eps, static_cast<T>(std::sqrt(1.0 - ab))));
}

template <typename T>
Tensor<T> predict_x0(const Tensor<T>& z_t, std::size_t t, const Tensor<T>& eps_hat, const NoiseSchedule& sched) {
  check_t(t, sched);
  if (z_t.shape() != eps_hat.shape()) throw DimensionError("predict_x0: shapes differ");
  const double ab = sched.alpha_bar[t];
  return ops::scale(ops::sub(z_t, ops::scale(eps_hat, static_cast<T>(std::sqrt(1.0 - ab)))),
                    static_cast<T>(1.0 / std::sqrt(ab)));
}

template <typename T>
Tensor<T> ddim_step(const Tensor<T>& z_t, const Tensor<T>& eps_hat, std::size_t t, long t_prev,
                    const NoiseSchedule& sched) {
  if (t_prev >= static_cast<long>(t)) throw ParameterError("ddim_step needs t_prev < t");
  const Tensor<T> x0 = predict_x0(z_t, t, eps_hat, sched);
  if (t_prev < 0) return x0;
  const double ab = sched.alpha_bar[static_cast<std::size_t>(t_prev)];
  return ops::add(ops::scale(x0, static_cast<T>(std::sqrt(ab))), ops::scale(eps_hat, static_cast<T>(std::sqrt(1.0 - ab))));
}

std::vector<std::size_t> ddim_timesteps(std::size_t total, std::size_t steps) {
  if (steps == 0 || steps > total) throw ParameterError("DDIM step count must be in [1, T]");
  const std::size_t stride = total / steps;
  std::vector<std::size_t> ts;
  for (std::size_t i = 0; i < steps; ++i) ts.push_back(total - 1 - i * stride);
  return ts;
}

template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_uncond, const Tensor<T>& eps_cond, double w) {
  if (eps_uncond.shape() != eps_cond.shape()) throw DimensionError("cfg_combine: shapes differ");
  return ops::add(ops::scale(eps_uncond, static_cast<T>(1.0 - w)), ops::scale(eps_cond, static_cast<T>(w)));
}

double weighted_total(const LossBreakdown& l, const LossWeights& w) {
  return w.diff * l.diff + w.recon * l.recon + w.edge * l.edge + w.perc * l.perc + w.prior * l.prior;
}

template <typename T>
Tensor<T> sobel_magnitude(const Tensor<T>& image) {
  const std::size_t c = image.dim(0);
  std::vector<T> kernel(2 * c * 9);
  const double sx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  const double sy[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  for (std::size_t ch = 0; ch < c; ++ch)
    for (int k = 0; k < 9; ++k) {
      kernel[ch * 9 + k] = static_cast<T>(sx[k] / static_cast<double>(c));
      kernel[(c + ch) * 9 + k] = static_cast<T>(sy[k] / static_cast<double>(c));
    }
  const Tensor<T> g = ops::conv2d(image, Tensor<T>::from({2, c, 3, 3}, std::move(kernel)), nullptr, 1, 1);
  const Tensor<T> sq = ops::square(g);
  return ops::sqrt(ops::add_scalar(ops::add(ops::slice_dim0(sq, 0, 1), ops::slice_dim0(sq, 1, 1)), T(1e-6)));
}

template <typename T>
PerceptualNet<T> PerceptualNet<T>::create(std::uint64_t seed) {
  Rng rng(seed);
  PerceptualNet p;
  const std::size_t widths[4] = {3, 8, 16, 32};
  for (int s = 0; s < 3; ++s) {
    auto conv = nn::Conv2d<T>::create(widths[s], widths[s + 1], 3, 1, rng);
    conv.weight.set_requires_grad(false);
    conv.bias.set_requires_grad(false);
    p.stages.push_back(conv);
  }
  return p;
}

template <typename T>
Tensor<T> PerceptualNet<T>::distance(const Tensor<T>& a, const Tensor<T>& b) const {
  if (a.shape() != b.shape()) throw DimensionError("perceptual distance: shapes differ");
  Tensor<T> fa = a, fb = b;
  Tensor<T> total;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (s > 0) {
      fa = ops::avg_pool2x(fa);
      fb = ops::avg_pool2x(fb);
    }
    fa = ops::relu(stages[s](fa));
    fb = ops::relu(stages[s](fb));
    const Tensor<T> term = ops::mse_loss(fa, fb);
    total = s == 0 ? term : ops::add(total, term);
  }
  return total;
}

#define FIELDGEN_INSTANTIATE_DIFFUSION(T)                                                                 \
  template Tensor<T> q_sample(const Tensor<T>&, std::size_t, const Tensor<T>&, const NoiseSchedule&);     \
  template Tensor<T> predict_x0(const Tensor<T>&, std::size_t, const Tensor<T>&, const NoiseSchedule&);   \
  template Tensor<T> ddim_step(const Tensor<T>&, const Tensor<T>&, std::size_t, long, const NoiseSchedule&); \
  template Tensor<T> cfg_combine(const Tensor<T>&, const Tensor<T>&, double);                             \
  template Tensor<T> sobel_magnitude(const Tensor<T>&);                                                   \
  template struct PerceptualNet<T>;

FIELDGEN_INSTANTIATE_DIFFUSION(float)
FIELDGEN_INSTANTIATE_DIFFUSION(double)

}  // namespace fieldgen
