#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <vector>

#include "fieldgen/nn.hpp"
#include "fieldgen/rng.hpp"
#include "fieldgen/tensor.hpp"

namespace fieldgen {

struct DiTConfig {
  std::size_t latent_channels = 64;
  std::size_t latent_size = 8;  // latent h = w
  std::size_t grid = 8;         // g, tokens = g^2
  std::size_t dim = 128;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::vector<std::size_t> scales{1, 2, 4};
  std::size_t mlp_ratio = 4;
  std::size_t spatial_hidden = 32;
  std::size_t cond_width = 32;  // channels of the last condition-encoder stage
  std::size_t image_size = 64;

  void validate() const;
  std::size_t tokens() const { return grid * grid; }
  std::size_t patch() const { return latent_size / grid; }
  std::size_t head_dim() const { return dim / heads; }
  // ceil((g - 1) * sqrt(2)) + 1
  std::size_t distance_buckets() const;
};

struct PairGeometry {
  std::size_t grid = 0;
  std::vector<double> distance;   // g^2 x g^2
  std::vector<double> direction;  // g^2 x g^2 x 2, (p_i - p_j) / (d_ij + eps)
};

// Token i sits at grid cell (i / g, i % g).
PairGeometry pairwise_geometry(std::size_t grid);

// mask[k][i * g^2 + j] is true iff the Chebyshev distance between i and j is at most scales[k].
std::vector<std::vector<bool>> neighborhood_masks(std::size_t grid, const std::vector<std::size_t>& scales);

// Sinusoidal features: first half sin(t * f_k), second half cos(t * f_k), f_k = 10000^(-k / (d/2)).
std::vector<double> sinusoidal_features(double t, std::size_t dim);

// Call-site audit for cross-attention; shared by copies of a model.
struct InjectionAudit {
  std::atomic<std::size_t> cross_attention_calls{0};
  std::atomic<std::size_t> injection_points{0};
  std::atomic<std::size_t> condition_encodings{0};

  void reset() {
    cross_attention_calls = 0;
    injection_points = 0;
    condition_encodings = 0;
  }
};

template <typename T>
struct SpatialBiasNet {
  nn::Linear<T> d1, d2;  // MLP_d
  nn::Linear<T> u1, u2;  // MLP_u
  Tensor<T> rel_table;   // E_r, [buckets, hidden]
  nn::Linear<T> fusion;
  nn::Linear<T> out;  // hidden -> heads, zero-initialized

  static SpatialBiasNet create(const DiTConfig& cfg, Rng& rng);
  // Per-head bias, one [N, N] tensor per head.
  std::vector<Tensor<T>> operator()(const PairGeometry& geo, std::size_t buckets) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

template <typename T>
struct MultiScaleAttention {
  nn::Linear<T> qkv;     // d -> 3d, shared by all scales
  nn::Linear<T> fusion;  // 3d -> d over [A_1; A_2; A_4]

  static MultiScaleAttention create(const DiTConfig& cfg, Rng& rng);
  // x: [N, d]. masks: additive [N, N] per scale. bias: per-head [N, N] or empty.
  // When `per_scale` is given it receives A_k before fusion.
  Tensor<T> operator()(const Tensor<T>& x, const std::vector<Tensor<T>>& masks, const std::vector<Tensor<T>>& bias,
                       std::size_t heads, std::vector<Tensor<T>>* per_scale = nullptr) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

template <typename T>
struct CrossAttention {
  nn::Linear<T> q, k, v, out;

  static CrossAttention create(const DiTConfig& cfg, Rng& rng);
  // p: [N, d], c: [M, d]. Optional additive mask [N, M].
  Tensor<T> operator()(const Tensor<T>& p, const Tensor<T>& c, std::size_t heads,
                       const Tensor<T>* mask = nullptr) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

template <typename T>
struct DiTBlock {
  nn::LayerNorm<T> norm1, norm2, norm3;
  MultiScaleAttention<T> self_attn;
  CrossAttention<T> cross_attn;
  nn::Linear<T> fc1, fc2;

  static DiTBlock create(const DiTConfig& cfg, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& cond, const std::vector<Tensor<T>>& masks,
                       const std::vector<Tensor<T>>& bias, std::size_t heads, InjectionAudit* audit = nullptr) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

// One small CNN per 3-channel stream, pooled by spatial moments
// (mean of f, f*x, f*y, f*x^2, f*y^2, f*x*y over [-1, 1] coordinates).
template <typename T>
struct ConditionEncoder {
  struct Stream {
    std::vector<nn::Conv2d<T>> convs;
    nn::Linear<T> proj;
    nn::LayerNorm<T> norm;
  };
  std::vector<Stream> streams;  // sketch, edge, spatial reference

  static ConditionEncoder create(const DiTConfig& cfg, Rng& rng);
  // cond: [9, H, W] -> [3, d]
  Tensor<T> operator()(const Tensor<T>& cond) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

template <typename T>
struct DiT {
  DiTConfig config;
  nn::Linear<T> patch_embed;
  nn::Linear<T> time1, time2;
  SpatialBiasNet<T> spatial;
  std::vector<DiTBlock<T>> blocks;
  nn::LayerNorm<T> final_norm;
  nn::Linear<T> head;  // zero-initialized
  ConditionEncoder<T> cond_encoder;
  Tensor<T> null_tokens;  // [3, d]
  std::shared_ptr<InjectionAudit> audit = std::make_shared<InjectionAudit>();

  PairGeometry geometry;
  std::vector<Tensor<T>> masks;  // additive, one per scale
  // Fixed [N, d] sin-cos features of each patch's row (first half) and column.
  Tensor<T> position;

  static DiT create(const DiTConfig& cfg, Rng& rng);

  // [C, h, w] -> [N, C * p * p], and back.
  Tensor<T> patchify(const Tensor<T>& z) const;
  Tensor<T> unpatchify(const Tensor<T>& tokens) const;
  Tensor<T> timestep_embedding(std::size_t t) const;
  Tensor<T> spatial_bias() const;  // [heads, N, N] for inspection
  Tensor<T> encode_condition(const Tensor<T>& cond) const;

  // Predicted noise with the shape of z_t.
  Tensor<T> operator()(const Tensor<T>& z_t, std::size_t t, const Tensor<T>& cond_tokens) const;
  void collect(nn::ParamSet<T>& set, const std::string& prefix) const;
};

}  // namespace fieldgen
