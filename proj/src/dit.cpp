#include "fieldgen/dit.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fieldgen/errors.hpp"
#include "fieldgen/ops.hpp"

namespace fieldgen {

void DiTConfig::validate() const {
  if (grid < 2) throw ConfigError("DiT grid must be at least 2");
  if (latent_size % grid != 0) throw ConfigError("latent extent must be divisible by the patch grid");
  if (heads == 0 || dim % heads != 0) throw ConfigError("token dim must be divisible by the head count");
  if (dim % 4 != 0) throw ConfigError("token dim must be a multiple of 4");
  if (depth == 0) throw ConfigError("DiT depth must be positive");
  if (scales.empty()) throw ConfigError("at least one neighborhood scale is required");
  for (std::size_t k : scales)
    if (k == 0) throw ConfigError("neighborhood scales must be positive");
  if (image_size % 4 != 0 || image_size < 8) throw ConfigError("condition image extent must be a multiple of 4");
}

std::size_t DiTConfig::distance_buckets() const {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(grid - 1) * std::numbers::sqrt2)) + 1;
}

PairGeometry pairwise_geometry(std::size_t grid) {
  if (grid < 2) throw ConfigError("pairwise geometry needs g >= 2");
  const std::size_t n = grid * grid;
  PairGeometry geo;
  geo.grid = grid;
  geo.distance.resize(n * n);
  geo.direction.resize(n * n * 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double dr = static_cast<double>(i / grid) - static_cast<double>(j / grid);
      const double dc = static_cast<double>(i % grid) - static_cast<double>(j % grid);
      const double d = std::hypot(dr, dc);
      geo.distance[i * n + j] = d;
      geo.direction[(i * n + j) * 2] = dr / (d + 1e-8);
      geo.direction[(i * n + j) * 2 + 1] = dc / (d + 1e-8);
    }
  return geo;
}

std::vector<std::vector<bool>> neighborhood_masks(std::size_t grid, const std::vector<std::size_t>& scales) {
  const std::size_t n = grid * grid;
  std::vector<std::vector<bool>> masks;
  for (std::size_t k : scales) {
    std::vector<bool> m(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t dr = i / grid > j / grid ? i / grid - j / grid : j / grid - i / grid;
        const std::size_t dc = i % grid > j % grid ? i % grid - j % grid : j % grid - i % grid;
        m[i * n + j] = std::max(dr, dc) <= k;
      }
    masks.push_back(std::move(m));
  }
  return masks;
}

std::vector<double> sinusoidal_features(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> f(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    f[k] = std::sin(t * freq);
    f[half + k] = std::cos(t * freq);
  }
  return f;
}

namespace {

template <typename T>
Tensor<T> constant(const Shape& shape, const std::vector<double>& values) {
  return Tensor<T>::from(shape, std::vector<T>(values.begin(), values.end()));
}

template <typename T>
std::vector<Tensor<T>> split_heads(const Tensor<T>& x, std::size_t offset, std::size_t heads, std::size_t dh) {
  std::vector<Tensor<T>> out;
  for (std::size_t h = 0; h < heads; ++h) out.push_back(ops::slice_cols(x, offset + h * dh, dh));
  return out;
}

}  // namespace

template <typename T>
SpatialBiasNet<T> SpatialBiasNet<T>::create(const DiTConfig& cfg, Rng& rng) {
  const std::size_t s = cfg.spatial_hidden;
  SpatialBiasNet b;
  b.d1 = nn::Linear<T>::create(1, s, rng);
  b.d2 = nn::Linear<T>::create(s, s, rng);
  b.u1 = nn::Linear<T>::create(2, s, rng);
  b.u2 = nn::Linear<T>::create(s, s, rng);
  b.rel_table = nn::normal_parameter<T>({cfg.distance_buckets(), s}, 0.02, rng);
  b.fusion = nn::Linear<T>::create(3 * s, s, rng);
  b.out = nn::Linear<T>::create(s, cfg.heads, rng, true);
  return b;
}

template <typename T>
std::vector<Tensor<T>> SpatialBiasNet<T>::operator()(const PairGeometry& geo, std::size_t buckets) const {
  const std::size_t pairs = geo.distance.size();
  const std::size_t n = geo.grid * geo.grid;
  std::vector<std::size_t> bucket(pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    bucket[p] = static_cast<std::size_t>(std::floor(geo.distance[p]));
    if (bucket[p] >= buckets) {
      throw ConfigError("distance bucket " + std::to_string(bucket[p]) + " exceeds table size " +
                        std::to_string(buckets));
    }
  }
  const Tensor<T> dist = constant<T>({pairs, 1}, geo.distance);
  const Tensor<T> dir = constant<T>({pairs, 2}, geo.direction);
  const Tensor<T> hd = d2(ops::silu(d1(dist)));
  const Tensor<T> hu = u2(ops::silu(u1(dir)));
  const Tensor<T> hr = ops::gather_rows(rel_table, bucket);
  const Tensor<T> fused = ops::silu(fusion(ops::concat_cols<T>({hd, hu, hr})));
  const Tensor<T> per_head = ops::transpose(out(fused));  // [heads, pairs]
  std::vector<Tensor<T>> bias;
  for (std::size_t h = 0; h < per_head.dim(0); ++h) bias.push_back(ops::reshape(ops::slice_dim0(per_head, h, 1), {n, n}));
  return bias;
}

template <typename T>
void SpatialBiasNet<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  d1.collect(set, prefix + ".mlp_d1");
  d2.collect(set, prefix + ".mlp_d2");
  u1.collect(set, prefix + ".mlp_u1");
  u2.collect(set, prefix + ".mlp_u2");
  set.add(prefix + ".rel_table", rel_table);
  fusion.collect(set, prefix + ".fusion");
  out.collect(set, prefix + ".out");
}

template <typename T>
MultiScaleAttention<T> MultiScaleAttention<T>::create(const DiTConfig& cfg, Rng& rng) {
  return {nn::Linear<T>::create(cfg.dim, 3 * cfg.dim, rng),
          nn::Linear<T>::create(cfg.scales.size() * cfg.dim, cfg.dim, rng)};
}

template <typename T>
Tensor<T> MultiScaleAttention<T>::operator()(const Tensor<T>& x, const std::vector<Tensor<T>>& masks,
                                             const std::vector<Tensor<T>>& bias, std::size_t heads,
                                             std::vector<Tensor<T>>* per_scale) const {
  const std::size_t d = x.dim(1), dh = d / heads;
  if (masks.size() * d != fusion.in_features()) throw DimensionError("attention: mask count does not match fusion width");
  const Tensor<T> proj = qkv(x);
  const auto q = split_heads(proj, 0, heads, dh);
  const auto k = split_heads(proj, d, heads, dh);
  const auto v = split_heads(proj, 2 * d, heads, dh);
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<std::vector<Tensor<T>>> outputs(masks.size());
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor<T> logits = ops::scale(ops::matmul(q[h], ops::transpose(k[h])), inv);
    if (!bias.empty()) logits = ops::add(logits, bias[h]);
    for (std::size_t s = 0; s < masks.size(); ++s) {
      outputs[s].push_back(ops::matmul(ops::softmax_lastdim(logits, &masks[s]), v[h]));
    }
  }
  std::vector<Tensor<T>> scales;
  for (auto& o : outputs) scales.push_back(ops::concat_cols(o));
  if (per_scale) *per_scale = scales;
  return fusion(ops::concat_cols(scales));
}

template <typename T>
void MultiScaleAttention<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  qkv.collect(set, prefix + ".qkv");
  fusion.collect(set, prefix + ".fusion");
}

template <typename T>
CrossAttention<T> CrossAttention<T>::create(const DiTConfig& cfg, Rng& rng) {
  return {nn::Linear<T>::create(cfg.dim, cfg.dim, rng), nn::Linear<T>::create(cfg.dim, cfg.dim, rng),
          nn::Linear<T>::create(cfg.dim, cfg.dim, rng), nn::Linear<T>::create(cfg.dim, cfg.dim, rng)};
}

template <typename T>
Tensor<T> CrossAttention<T>::operator()(const Tensor<T>& p, const Tensor<T>& c, std::size_t heads,
                                        const Tensor<T>* mask) const {
  if (p.rank() != 2 || c.rank() != 2 || p.dim(1) != c.dim(1)) {
    throw DimensionError("cross attention: token dims differ " + shape_str(p.shape()) + " vs " + shape_str(c.shape()));
  }
  const std::size_t d = p.dim(1), dh = d / heads;
  const auto qh = split_heads(q(p), 0, heads, dh);
  const auto kh = split_heads(k(c), 0, heads, dh);
  const auto vh = split_heads(v(c), 0, heads, dh);
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Tensor<T>> parts;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor<T> logits = ops::scale(ops::matmul(qh[h], ops::transpose(kh[h])), inv);
    parts.push_back(ops::matmul(ops::softmax_lastdim(logits, mask), vh[h]));
  }
  return out(ops::concat_cols(parts));
}

template <typename T>
void CrossAttention<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  q.collect(set, prefix + ".q");
  k.collect(set, prefix + ".k");
  v.collect(set, prefix + ".v");
  out.collect(set, prefix + ".out");
}

template <typename T>
DiTBlock<T> DiTBlock<T>::create(const DiTConfig& cfg, Rng& rng) {
  DiTBlock b;
  b.norm1 = nn::LayerNorm<T>::create(cfg.dim);
  b.norm2 = nn::LayerNorm<T>::create(cfg.dim);
  b.norm3 = nn::LayerNorm<T>::create(cfg.dim);
  b.self_attn = MultiScaleAttention<T>::create(cfg, rng);
  b.cross_attn = CrossAttention<T>::create(cfg, rng);
  b.fc1 = nn::Linear<T>::create(cfg.dim, cfg.mlp_ratio * cfg.dim, rng);
  b.fc2 = nn::Linear<T>::create(cfg.mlp_ratio * cfg.dim, cfg.dim, rng);
  return b;
}

template <typename T>
Tensor<T> DiTBlock<T>::operator()(const Tensor<T>& x, const Tensor<T>& cond, const std::vector<Tensor<T>>& masks,
                                  const std::vector<Tensor<T>>& bias, std::size_t heads, InjectionAudit* audit) const {
  Tensor<T> h = ops::add(x, self_attn(norm1(x), masks, bias, heads));
  h = ops::add(h, cross_attn(norm2(h), cond, heads));
  if (audit) {
    audit->cross_attention_calls += 1;
    audit->injection_points += h.dim(0) * cond.dim(0);
  }
  return ops::add(h, fc2(ops::gelu(fc1(norm3(h)))));
}

template <typename T>
void DiTBlock<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  norm1.collect(set, prefix + ".norm1");
  self_attn.collect(set, prefix + ".self_attn");
  norm2.collect(set, prefix + ".norm2");
  cross_attn.collect(set, prefix + ".cross_attn");
  norm3.collect(set, prefix + ".norm3");
  fc1.collect(set, prefix + ".fc1");
  fc2.collect(set, prefix + ".fc2");
}

template <typename T>
ConditionEncoder<T> ConditionEncoder<T>::create(const DiTConfig& cfg, Rng& rng) {
  ConditionEncoder e;
  const std::size_t w = cfg.cond_width;
  for (int s = 0; s < 3; ++s) {
    Stream st;
    st.convs.push_back(nn::Conv2d<T>::create(3, w / 4, 3, 1, rng));
    st.convs.push_back(nn::Conv2d<T>::create(w / 4, w / 2, 3, 1, rng));
    st.convs.push_back(nn::Conv2d<T>::create(w / 2, w, 3, 1, rng));
    st.proj = nn::Linear<T>::create(6 * w, cfg.dim, rng);
    st.norm = nn::LayerNorm<T>::create(cfg.dim);
    e.streams.push_back(std::move(st));
  }
  return e;
}

template <typename T>
Tensor<T> ConditionEncoder<T>::operator()(const Tensor<T>& cond) const {
  if (cond.rank() != 3 || cond.dim(0) != 9) {
    throw DimensionError("condition encoder expects [9,H,W], got " + shape_str(cond.shape()));
  }
  std::vector<Tensor<T>> tokens;
  for (std::size_t s = 0; s < 3; ++s) {
    const Stream& st = streams[s];
    Tensor<T> h = ops::silu(st.convs[0](ops::slice_dim0(cond, 3 * s, 3)));
    for (std::size_t c = 1; c < st.convs.size(); ++c) h = ops::silu(st.convs[c](ops::avg_pool2x(h)));
    const std::size_t ch = h.dim(0), hh = h.dim(1), ww = h.dim(2), pix = hh * ww;
    std::vector<double> basis(pix * 6);
    for (std::size_t y = 0; y < hh; ++y)
      for (std::size_t x = 0; x < ww; ++x) {
        const double ys = 2.0 * (y + 0.5) / static_cast<double>(hh) - 1.0;
        const double xs = 2.0 * (x + 0.5) / static_cast<double>(ww) - 1.0;
        const double m[6] = {1.0, xs, ys, xs * xs, ys * ys, xs * ys};
        for (int k = 0; k < 6; ++k) basis[(y * ww + x) * 6 + k] = m[k] / static_cast<double>(pix);
      }
    const Tensor<T> pooled = ops::matmul(ops::reshape(h, {ch, pix}), constant<T>({pix, 6}, basis));
    tokens.push_back(st.norm(st.proj(ops::reshape(pooled, {1, ch * 6}))));
  }
  return ops::concat_dim0(tokens);
}

template <typename T>
void ConditionEncoder<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  static const char* names[3] = {"sketch", "edge", "spatial_ref"};
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const std::string p = prefix + "." + names[s];
    for (std::size_t c = 0; c < streams[s].convs.size(); ++c) streams[s].convs[c].collect(set, p + ".conv" + std::to_string(c));
    streams[s].proj.collect(set, p + ".proj");
    streams[s].norm.collect(set, p + ".norm");
  }
}

template <typename T>
DiT<T> DiT<T>::create(const DiTConfig& cfg, Rng& rng) {
  cfg.validate();
  DiT m;
  m.config = cfg;
  const std::size_t pp = cfg.latent_channels * cfg.patch() * cfg.patch();
  m.patch_embed = nn::Linear<T>::create(pp, cfg.dim, rng);
  m.time1 = nn::Linear<T>::create(cfg.dim, cfg.dim, rng);
  m.time2 = nn::Linear<T>::create(cfg.dim, cfg.dim, rng);
  m.spatial = SpatialBiasNet<T>::create(cfg, rng);
  for (std::size_t l = 0; l < cfg.depth; ++l) m.blocks.push_back(DiTBlock<T>::create(cfg, rng));
  m.final_norm = nn::LayerNorm<T>::create(cfg.dim);
  m.head = nn::Linear<T>::create(cfg.dim, pp, rng, true);
  m.cond_encoder = ConditionEncoder<T>::create(cfg, rng);
  m.null_tokens = nn::normal_parameter<T>({3, cfg.dim}, 1.0, rng);

  m.geometry = pairwise_geometry(cfg.grid);
  const std::size_t n = cfg.tokens();
  std::vector<double> pos(n * cfg.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = sinusoidal_features(static_cast<double>(i / cfg.grid), cfg.dim / 2);
    const auto col = sinusoidal_features(static_cast<double>(i % cfg.grid), cfg.dim / 2);
    std::copy(row.begin(), row.end(), pos.begin() + static_cast<long>(i * cfg.dim));
    std::copy(col.begin(), col.end(), pos.begin() + static_cast<long>(i * cfg.dim + cfg.dim / 2));
  }
  m.position = constant<T>({n, cfg.dim}, pos);
  for (const auto& mask : neighborhood_masks(cfg.grid, cfg.scales)) {
    std::vector<T> additive(n * n);
    for (std::size_t i = 0; i < n * n; ++i) additive[i] = mask[i] ? T(0) : static_cast<T>(ops::kMaskedLogit);
    m.masks.push_back(Tensor<T>::from({n, n}, std::move(additive)));
  }
  return m;
}

namespace {

// Flat latent index for (token, feature) under the row-major patch partition.
std::vector<std::size_t> patch_indices(const DiTConfig& cfg) {
  const std::size_t g = cfg.grid, p = cfg.patch(), C = cfg.latent_channels, s = cfg.latent_size;
  std::vector<std::size_t> idx;
  idx.reserve(C * s * s);
  for (std::size_t n = 0; n < g * g; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx) idx.push_back((c * s + (n / g) * p + dy) * s + (n % g) * p + dx);
  return idx;
}

}  // namespace

template <typename T>
Tensor<T> DiT<T>::patchify(const Tensor<T>& z) const {
  const auto& c = config;
  if (z.shape() != Shape{c.latent_channels, c.latent_size, c.latent_size}) {
    throw DimensionError("patchify expects " + shape_str({c.latent_channels, c.latent_size, c.latent_size}) +
                         ", got " + shape_str(z.shape()));
  }
  const std::size_t pp = c.latent_channels * c.patch() * c.patch();
  return ops::take(z, patch_indices(c), {c.tokens(), pp});
}

template <typename T>
Tensor<T> DiT<T>::unpatchify(const Tensor<T>& tokens) const {
  const auto& c = config;
  const auto fwd = patch_indices(c);
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
  return ops::take(tokens, inv, {c.latent_channels, c.latent_size, c.latent_size});
}

template <typename T>
Tensor<T> DiT<T>::timestep_embedding(std::size_t t) const {
  const auto f = sinusoidal_features(static_cast<double>(t), config.dim);
  const Tensor<T> e = time2(ops::silu(time1(constant<T>({1, config.dim}, f))));
  return ops::reshape(e, {config.dim});
}

template <typename T>
Tensor<T> DiT<T>::spatial_bias() const {
  return ops::concat_dim0(spatial(geometry, config.distance_buckets()));
}

template <typename T>
Tensor<T> DiT<T>::encode_condition(const Tensor<T>& cond) const {
  audit->condition_encodings += 1;
  return cond_encoder(cond);
}

template <typename T>
Tensor<T> DiT<T>::operator()(const Tensor<T>& z_t, std::size_t t, const Tensor<T>& cond_tokens) const {
  if (cond_tokens.shape() != Shape{3, config.dim}) {
    throw DimensionError("condition tokens must be [3," + std::to_string(config.dim) + "]");
  }
  Tensor<T> x = ops::add_rows(ops::add(patch_embed(patchify(z_t)), position), timestep_embedding(t));
  const auto bias = spatial(geometry, config.distance_buckets());
  for (const auto& block : blocks) x = block(x, cond_tokens, masks, bias, config.heads, audit.get());
  return unpatchify(head(final_norm(x)));
}

template <typename T>
void DiT<T>::collect(nn::ParamSet<T>& set, const std::string& prefix) const {
  patch_embed.collect(set, prefix + ".patch_embed");
  time1.collect(set, prefix + ".time1");
  time2.collect(set, prefix + ".time2");
  spatial.collect(set, prefix + ".spatial");
  for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].collect(set, prefix + ".block" + std::to_string(l));
  final_norm.collect(set, prefix + ".final_norm");
  head.collect(set, prefix + ".head");
  cond_encoder.collect(set, prefix + ".cond");
  set.add(prefix + ".null_tokens", null_tokens);
}

#define FIELDGEN_INSTANTIATE_DIT(T)     \
  template struct SpatialBiasNet<T>;    \
  template struct MultiScaleAttention<T>; \
  template struct CrossAttention<T>;    \
  template struct DiTBlock<T>;          \
  template struct ConditionEncoder<T>;  \
  template struct DiT<T>;

FIELDGEN_INSTANTIATE_DIT(float)
FIELDGEN_INSTANTIATE_DIT(double)

}  // namespace fieldgen
