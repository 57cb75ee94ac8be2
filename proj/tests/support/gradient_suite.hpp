#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fieldgen/diffusion.hpp"
#include "fieldgen/dit.hpp"
#include "fieldgen/gradcheck.hpp"
#include "fieldgen/ops.hpp"
#include "fieldgen/rng.hpp"
#include "fieldgen/vae.hpp"

// Finite-difference checks in double precision shared by the unit tests and
// the acceptance runner.
namespace fieldgen::suite {

struct NamedCheck {
  std::string name;
  GradCheckResult result;
};

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return Tensor<T>::from(shape, std::move(v));
}

template <typename T>
Tensor<T> uniform_tensor(const Shape& shape, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform());
  return Tensor<T>::from(shape, std::move(v));
}

template <typename T>
void randomize(Tensor<T> t, Rng& rng, double scale) {
  for (auto& v : t.mutable_data()) v = static_cast<T>(scale * rng.normal());
}

inline DiTConfig small_dit() {
  DiTConfig c;
  c.latent_channels = 4;
  c.latent_size = 4;
  c.grid = 4;
  c.dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.scales = {1, 2, 4};
  c.mlp_ratio = 2;
  c.spatial_hidden = 8;
  c.cond_width = 8;
  c.image_size = 16;
  return c;
}

// Contract with fixed weights so every output coordinate matters.
inline TensorD probe(const TensorD& t) {
  std::vector<double> c(t.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::sin(1.0 + 0.37 * static_cast<double>(i));
  return ops::sum(ops::mul(t, TensorD::from(t.shape(), c)));
}

// Every differentiable primitive plus the loss-side composites.
inline std::vector<NamedCheck> op_checks() {
  Rng rng(33);
  const auto w44 = random_tensor<double>({4, 4}, rng);
  auto x = random_tensor<double>({4, 4}, rng);
  auto y = random_tensor<double>({4, 4}, rng);
  auto v = random_tensor<double>({4}, rng);
  std::vector<NamedCheck> out;
  auto check = [&](const char* name, const std::function<TensorD()>& f, std::vector<TensorD> params) {
    out.push_back({name, grad_check(f, std::move(params))});
  };
  check("add", [&] { return probe(ops::add(x, y)); }, {x, y});
  check("sub", [&] { return probe(ops::sub(x, y)); }, {x, y});
  check("mul", [&] { return probe(ops::mul(x, y)); }, {x, y});
  check("add_rows", [&] { return probe(ops::add_rows(x, v)); }, {x, v});
  check("scale", [&] { return probe(ops::scale(x, 1.7)); }, {x});
  check("transpose", [&] { return probe(ops::transpose(x)); }, {x});
  check("matmul", [&] { return probe(ops::matmul(x, y)); }, {x, y});
  check("silu", [&] { return probe(ops::silu(x)); }, {x});
  check("gelu", [&] { return probe(ops::gelu(x)); }, {x});
  check("sigmoid", [&] { return probe(ops::sigmoid(x)); }, {x});
  check("exp", [&] { return probe(ops::exp(x)); }, {x});
  check("sqrt", [&] { return probe(ops::sqrt(ops::add_scalar(ops::square(x), 0.5))); }, {x});
  check("softmax", [&] { return probe(ops::softmax_lastdim(ops::matmul(x, w44))); }, {x});
  std::vector<double> keep(16);
  for (std::size_t i = 0; i < 16; ++i) keep[i] = (i % 4 == i / 4 || i % 3 == 0) ? 0.0 : ops::kMaskedLogit;
  const auto mask = TensorD::from({4, 4}, keep);
  check("masked softmax", [&] { return probe(ops::softmax_lastdim(ops::matmul(x, w44), &mask)); }, {x});
  check("layer_norm", [&] { return probe(ops::layer_norm(x, v, ops::scale(v, 0.5))); }, {x, v});
  check("slice/concat cols",
        [&] { return probe(ops::concat_cols<double>({ops::slice_cols(x, 1, 2), ops::slice_cols(y, 0, 3)})); }, {x, y});
  check("slice/concat dim0", [&] { return probe(ops::concat_dim0<double>({ops::slice_dim0(x, 2, 2), y})); }, {x, y});
  check("gather_rows", [&] { return probe(ops::gather_rows(x, {3, 0, 3, 1})); }, {x});
  check("reshape", [&] { return probe(ops::reshape(x, {2, 8})); }, {x});
  check("mse", [&] { return ops::mse_loss(x, y); }, {x, y});
  check("l1", [&] { return ops::l1_loss(x, y); }, {x, y});

  auto img = random_tensor<double>({2, 4, 4}, rng);
  auto kern = random_tensor<double>({3, 2, 3, 3}, rng);
  auto bias = random_tensor<double>({3}, rng);
  check("conv2d s1", [&] { return probe(ops::conv2d(img, kern, &bias, 1, 1)); }, {img, kern, bias});
  auto img5 = random_tensor<double>({2, 5, 5}, rng);
  check("conv2d s2", [&] { return probe(ops::conv2d(img5, kern, &bias, 2, 1)); }, {img5, kern, bias});
  check("upsample", [&] { return probe(ops::upsample_nearest2x(img)); }, {img});
  check("avg_pool2x", [&] { return probe(ops::avg_pool2x(img)); }, {img});
  check("spatial_mean", [&] { return probe(ops::spatial_mean(img)); }, {img});

  auto mu = random_tensor<double>({2, 2, 2}, rng), logvar = random_tensor<double>({2, 2, 2}, rng, 0.5);
  const auto noise = random_tensor<double>({2, 2, 2}, rng);
  check("reparameterize", [&] { return probe(reparameterize(mu, logvar, noise)); }, {mu, logvar});
  check("kl_divergence", [&] { return kl_divergence(mu, logvar); }, {mu, logvar});
  auto zp = random_tensor<double>({2, 2, 2}, rng);
  check("blend_latents", [&] { return probe(blend_latents(mu, zp, 0.3)); }, {mu, zp});
  const auto sched = build_schedule();
  auto eps = random_tensor<double>({2, 2, 2}, rng);
  check("q_sample/predict_x0", [&] { return probe(predict_x0(q_sample(mu, 600, eps, sched), 600, ops::scale(eps, 0.9), sched)); },
        {mu, eps});
  auto rgb = uniform_tensor<double>({3, 5, 5}, rng);
  check("sobel_magnitude", [&] { return probe(sobel_magnitude(rgb)); }, {rgb});
  const auto perc = PerceptualNet<double>::create();
  auto a = uniform_tensor<double>({3, 8, 8}, rng), b = uniform_tensor<double>({3, 8, 8}, rng);
  check("perceptual", [&] { return perc.distance(a, b); }, {a, b});
  return out;
}

// One DiT block (self-attention with spatial bias, cross-attention, MLP) on
// a 2x2 token grid, all parameters and inputs.
inline GradCheckResult dit_block_check() {
  Rng rng(14);
  DiTConfig cfg = small_dit();
  cfg.grid = 2;
  cfg.latent_size = 2;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.image_size = 16;
  const auto block = DiTBlock<double>::create(cfg, rng);
  auto spatial = SpatialBiasNet<double>::create(cfg, rng);
  randomize(spatial.out.weight, rng, 0.3);
  const auto geo = pairwise_geometry(2);
  std::vector<TensorD> masks;
  for (const auto& m : neighborhood_masks(2, cfg.scales)) {
    std::vector<double> add(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) add[i] = m[i] ? 0.0 : ops::kMaskedLogit;
    masks.push_back(TensorD::from({4, 4}, add));
  }
  auto x = random_tensor<double>({4, 8}, rng);
  auto c = random_tensor<double>({3, 8}, rng);
  nn::ParamSet<double> ps;
  block.collect(ps, "block");
  spatial.collect(ps, "spatial");
  std::vector<TensorD> params = ps.tensors();
  params.push_back(x);
  params.push_back(c);
  const auto w = random_tensor<double>({4, 8}, rng);
  return grad_check(
      [&] {
        const auto bias = spatial(geo, cfg.distance_buckets());
        return ops::sum(ops::mul(block(x, c, masks, bias, cfg.heads), w));
      },
      params);
}

// Full conditioned forward at small scale on a representative parameter subset.
inline GradCheckResult full_dit_check() {
  Rng rng(15);
  const DiTConfig cfg = small_dit();
  auto dit = DiT<double>::create(cfg, rng);
  randomize(dit.head.weight, rng, 0.2);
  randomize(dit.spatial.out.weight, rng, 0.2);
  auto z = random_tensor<double>({4, 4, 4}, rng);
  auto cond = uniform_tensor<double>({9, 16, 16}, rng);
  const auto w = random_tensor<double>({4, 4, 4}, rng);
  std::vector<TensorD> params = {z,
                                 cond,
                                 dit.patch_embed.weight,
                                 dit.time1.bias,
                                 dit.spatial.rel_table,
                                 dit.spatial.d1.weight,
                                 dit.blocks[0].self_attn.fusion.weight,
                                 dit.blocks[1].cross_attn.k.weight,
                                 dit.blocks[1].norm3.gamma,
                                 dit.head.weight,
                                 dit.cond_encoder.streams[1].proj.bias,
                                 dit.cond_encoder.streams[2].convs[0].weight,
                                 dit.null_tokens};
  return grad_check(
      [&] {
        const auto tokens = dit.encode_condition(cond);
        return ops::add(ops::sum(ops::mul(dit(z, 321, tokens), w)), ops::sum(ops::mul(dit(z, 321, dit.null_tokens), w)));
      },
      params);
}

// Encoder, reparameterization, prior blend, decoder and KL together.
inline GradCheckResult vae_prior_check() {
  Rng rng(16);
  VaeConfig cfg;
  cfg.base_width = 2;
  cfg.latent_channels = 2;
  auto vae = Vae<double>::create(cfg, rng);
  auto prior = ConditionalPrior<double>::create(cfg, rng);
  auto x = uniform_tensor<double>({3, 8, 8}, rng);
  auto cond = uniform_tensor<double>({9, 8, 8}, rng);
  const auto noise = random_tensor<double>({2, 1, 1}, rng);
  nn::ParamSet<double> ps;
  vae.collect(ps, "vae");
  prior.collect(ps, "prior");
  return grad_check(
      [&] {
        const auto enc = vae.encode(x);
        const auto z = reparameterize(enc.mu, enc.logvar, noise);
        const auto mixed = blend_latents(z, prior(cond), 0.7);
        return ops::add(ops::l1_loss(vae.decode(mixed), x), ops::scale(kl_divergence(enc.mu, enc.logvar), 0.1));
      },
      ps.tensors());
}

}  // namespace fieldgen::suite
