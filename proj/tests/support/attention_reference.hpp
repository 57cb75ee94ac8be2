#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "fieldgen/nn.hpp"

namespace fieldgen::suite {

// Plain-loop multi-head attention with an optional keep-mask, then concat.
inline std::vector<double> reference_attention(const TensorD& x, const nn::Linear<double>& qkv, std::size_t heads,
                                        const std::vector<bool>* keep) {
  const std::size_t n = x.dim(0), d = x.dim(1), dh = d / heads;
  std::vector<double> proj(n * 3 * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < 3 * d; ++o) {
      double s = qkv.bias[o];
      for (std::size_t k = 0; k < d; ++k) s += x[i * d + k] * qkv.weight[k * 3 * d + o];
      proj[i * 3 * d + o] = s;
    }
  std::vector<double> out(n * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logit(n, -INFINITY);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        if (keep && !(*keep)[i * n + j]) continue;
        double s = 0.0;
        for (std::size_t k = 0; k < dh; ++k) s += proj[i * 3 * d + h * dh + k] * proj[j * 3 * d + d + h * dh + k];
        logit[j] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logit[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += std::isinf(logit[j]) ? 0.0 : std::exp(logit[j] - mx);
      for (std::size_t j = 0; j < n; ++j) {
        if (std::isinf(logit[j])) continue;
        const double p = std::exp(logit[j] - mx) / z;
        for (std::size_t k = 0; k < dh; ++k) out[i * d + h * dh + k] += p * proj[j * 3 * d + 2 * d + h * dh + k];
      }
    }
  return out;
}


}  // namespace fieldgen::suite
