#include "fieldgen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fieldgen/errors.hpp"
#include "kernels.hpp"

namespace fieldgen::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::TensorNode<T>>;

template <typename T>
using Backward = std::function<void(detail::TensorNode<T>&)>;

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (const T x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

template <typename T>
Tensor<T> make_result(const Shape& shape, std::vector<T> data, const char* op,
                      std::vector<NodePtr<T>> parents, Backward<T> backward) {
  check_finite(data, op);
  Tensor<T> out = Tensor<T>::from(shape, std::move(data));
  if (!grad_enabled()) return out;
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr<T>& p) { return p->requires_grad; });
  if (!needs) return out;
  auto& node = out.node();
  node.requires_grad = true;
  node.is_leaf = false;
  node.parents = std::move(parents);
  node.backward = std::move(backward);
  return out;
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
  }
}

// Elementwise unary op given f(x) and f'(x) expressed through (x, y).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, const char* op, F f, DF df) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  auto xn = x.node_ptr();
  return make_result<T>(x.shape(), std::move(out), op, {xn}, [xn, df](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(xn->data[i], self.data[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>(a.shape(), std::move(out), "add", {an, bn}, [an, bn](detail::TensorNode<T>& self) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>(a.shape(), std::move(out), "sub", {an, bn}, [an, bn](detail::TensorNode<T>& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>(a.shape(), std::move(out), "mul", {an, bn}, [an, bn](detail::TensorNode<T>& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

template <typename T>
Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& b) {
  const std::size_t n = x.shape().back();
  if (b.numel() != n) {
    throw DimensionError("add_rows: bias of " + shape_str(b.shape()) + " for rows of " +
                         std::to_string(n));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] + b[j];
  auto xn = x.node_ptr(), bn = b.node_ptr();
  return make_result<T>(x.shape(), std::move(out), "add_rows", {xn, bn},
                        [xn, bn, rows, n](detail::TensorNode<T>& self) {
                          if (xn->requires_grad) {
                            auto g = xn->grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                          }
                          if (bn->requires_grad) {
                            auto g = bn->grad_buffer();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return unary<T>(x, "scale", [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return unary<T>(x, "add_scalar", [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " . " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  kernels::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>({m, n}, std::move(out), "matmul", {an, bn}, [an, bn, m, k, n](detail::TensorNode<T>& self) {
    if (an->requires_grad) {
      // dA = dC . B^T
      std::vector<T> bt(n * k);
      kernels::transpose(bn->data.data(), bt.data(), k, n);
      kernels::gemm_acc(self.grad.data(), bt.data(), an->grad_buffer().data(), m, n, k);
    }
    if (bn->requires_grad) {
      // dB = A^T . dC
      std::vector<T> at(k * m);
      kernels::transpose(an->data.data(), at.data(), m, k);
      kernels::gemm_acc(at.data(), self.grad.data(), bn->grad_buffer().data(), k, m, n);
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(m * n);
  kernels::transpose(x.data().data(), out.data(), m, n);
  auto xn = x.node_ptr();
  return make_result<T>({n, m}, std::move(out), "transpose", {xn}, [xn, m, n](detail::TensorNode<T>& self) {
    std::vector<T> back(m * n);
    kernels::transpose(self.grad.data(), back.data(), n, m);
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return unary<T>(
      x, "silu", [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T a = static_cast<T>(0.044715);
  return unary<T>(
      x, "gelu", [](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v))); },
      [](T v, T) {
        const T th = std::tanh(c * (v + a * v * v * v));
        return T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * c * (T(1) + T(3) * a * v * v);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (const T v : x.data()) {
    if (v < T(0)) throw NumericError("sqrt of a negative value");
  }
  return unary<T>(x, "sqrt", [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary<T>(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x, const std::type_identity_t<Tensor<T>>* mask) {
  const std::size_t n = x.shape().back();
  if (n == 0) throw DimensionError("softmax over an empty last extent");
  if (mask && mask->shape() != x.shape()) {
    throw DimensionError("softmax mask shape " + shape_str(mask->shape()) + " differs from " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.numel());
  std::vector<T> logits(n);
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = x[r * n + j] + (mask ? (*mask)[r * n + j] : T(0));
      mx = std::max(mx, logits[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const T e = std::exp(logits[j] - mx);
      out[r * n + j] = e;
      total += e;
    }
    const T inv = static_cast<T>(1.0 / total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] *= inv;
  }
  auto xn = x.node_ptr();
  return make_result<T>(x.shape(), std::move(out), "softmax", {xn}, [xn, rows, n](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(dy[j]) * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - static_cast<T>(dot));
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  const std::size_t n = x.shape().back();
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: gamma/beta must match last extent " + std::to_string(n));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<T>(is);
    for (std::size_t j = 0; j < n; ++j) {
      const T h = static_cast<T>((row[j] - mu) * is);
      xhat[r * n + j] = h;
      out[r * n + j] = h * gamma[j] + beta[j];
    }
  }
  auto xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr();
  return make_result<T>(
      x.shape(), std::move(out), "layer_norm", {xn, gn, bn},
      [xn, gn, bn, rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::TensorNode<T>& self) {
        if (gn->requires_grad || bn->requires_grad) {
          std::vector<double> dg(n, 0.0), db(n, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) {
              dg[j] += static_cast<double>(self.grad[r * n + j]) * xhat[r * n + j];
              db[j] += self.grad[r * n + j];
            }
          if (gn->requires_grad) {
            auto g = gn->grad_buffer();
            for (std::size_t j = 0; j < n; ++j) g[j] += static_cast<T>(dg[j]);
          }
          if (bn->requires_grad) {
            auto g = bn->grad_buffer();
            for (std::size_t j = 0; j < n; ++j) g[j] += static_cast<T>(db[j]);
          }
        }
        if (xn->requires_grad) {
          auto g = xn->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = static_cast<double>(self.grad[r * n + j]) * gn->data[j];
              mean_d += d;
              mean_dx += d * xhat[r * n + j];
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const double d = static_cast<double>(self.grad[r * n + j]) * gn->data[j];
              g[r * n + j] += static_cast<T>(inv_std[r] * (d - mean_d - xhat[r * n + j] * mean_dx));
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const std::type_identity_t<Tensor<T>>* bias,
                 std::size_t stride, std::size_t pad) {
  require_rank(x.shape(), 3, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  const std::size_t cout = kernel.dim(0), cin = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (x.dim(0) != cin) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(0)) + " channels, kernel expects " +
                         std::to_string(cin));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t h = x.dim(1), w = x.dim(2);
  if (h + 2 * pad < kh || w + 2 * pad < kw) throw DimensionError("conv2d: kernel larger than padded input");
  if ((h + 2 * pad - kh) % stride != 0 || (w + 2 * pad - kw) % stride != 0) {
    throw DimensionError("conv2d: non-integral output extent for input " + shape_str(x.shape()) +
                         " stride " + std::to_string(stride));
  }
  if (bias && bias->numel() != cout) throw DimensionError("conv2d: bias length mismatch");
  const kernels::ConvGeometry geo{cin, h, w, kh, kw, stride, pad,
                                  (h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1};
  const std::size_t patch = geo.patch(), pix = geo.out_pixels();

  std::vector<T> cols(patch * pix);
  kernels::im2col(x.data().data(), cols.data(), geo);
  std::vector<T> out(cout * pix, T(0));
  kernels::gemm_acc(kernel.data().data(), cols.data(), out.data(), cout, patch, pix);
  if (bias) {
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t p = 0; p < pix; ++p) out[c * pix + p] += (*bias)[c];
  }

  auto xn = x.node_ptr(), kn = kernel.node_ptr();
  std::vector<NodePtr<T>> parents{xn, kn};
  NodePtr<T> bn = bias ? bias->node_ptr() : nullptr;
  if (bn) parents.push_back(bn);
  return make_result<T>(
      {cout, geo.ho, geo.wo}, std::move(out), "conv2d", std::move(parents),
      [xn, kn, bn, geo, cout](detail::TensorNode<T>& self) {
        const std::size_t patch = geo.patch(), pix = geo.out_pixels();
        if (bn && bn->requires_grad) {
          auto g = bn->grad_buffer();
          for (std::size_t c = 0; c < cout; ++c) {
            double acc = 0.0;
            for (std::size_t p = 0; p < pix; ++p) acc += self.grad[c * pix + p];
            g[c] += static_cast<T>(acc);
          }
        }
        if (kn->requires_grad) {
          // dK[cout, patch] = dOut[cout, pix] . cols^T[pix, patch]
          std::vector<T> cols(patch * pix), cols_t(pix * patch);
          kernels::im2col(xn->data.data(), cols.data(), geo);
          kernels::transpose(cols.data(), cols_t.data(), patch, pix);
          kernels::gemm_acc(self.grad.data(), cols_t.data(), kn->grad_buffer().data(), cout, pix, patch);
        }
        if (xn->requires_grad) {
          // dCols[patch, pix] = K^T[patch, cout] . dOut[cout, pix]
          std::vector<T> kt(patch * cout), dcols(patch * pix, T(0));
          kernels::transpose(kn->data.data(), kt.data(), cout, patch);
          kernels::gemm_acc(kt.data(), self.grad.data(), dcols.data(), patch, cout, pix);
          kernels::col2im_acc(dcols.data(), xn->grad_buffer().data(), geo);
        }
      });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "upsample_nearest2x");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<T> out(c * 4 * h * w);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        out[(k * 2 * h + y) * 2 * w + xx] = x[(k * h + y / 2) * w + xx / 2];
  auto xn = x.node_ptr();
  return make_result<T>({c, 2 * h, 2 * w}, std::move(out), "upsample", {xn}, [xn, c, h, w](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          g[(k * h + y / 2) * w + xx / 2] += self.grad[(k * 2 * h + y) * 2 * w + xx];
  });
}

template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "avg_pool2x");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw DimensionError("avg_pool2x needs even extents, got " + shape_str(x.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  std::vector<T> out(c * ho * wo);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const T* p = x.data().data() + (k * h + 2 * y) * w + 2 * xx;
        out[(k * ho + y) * wo + xx] = T(0.25) * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  auto xn = x.node_ptr();
  return make_result<T>({c, ho, wo}, std::move(out), "avg_pool2x", {xn}, [xn, c, h, w](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    const std::size_t ho = h / 2, wo = w / 2;
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t xx = 0; xx < wo; ++xx) {
          const T d = T(0.25) * self.grad[(k * ho + y) * wo + xx];
          T* p = g.data() + (k * h + 2 * y) * w + 2 * xx;
          p[0] += d;
          p[1] += d;
          p[w] += d;
          p[w + 1] += d;
        }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  auto xn = x.node_ptr();
  return make_result<T>(shape, std::move(out), "reshape", {xn}, [xn](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> slice_dim0(const Tensor<T>& x, std::size_t start, std::size_t count) {
  if (count == 0 || start + count > x.dim(0)) {
    throw DimensionError("slice_dim0 [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") outside " + shape_str(x.shape()));
  }
  const std::size_t inner = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<T> out(x.data().begin() + start * inner, x.data().begin() + (start + count) * inner);
  auto xn = x.node_ptr();
  return make_result<T>(shape, std::move(out), "slice_dim0", {xn}, [xn, start, inner](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * inner + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat_dim0(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_dim0 of nothing");
  Shape shape = parts[0].shape();
  shape[0] = 0;
  std::vector<T> out;
  std::vector<NodePtr<T>> parents;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat_dim0: trailing extents differ");
    }
    shape[0] += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node_ptr());
  }
  auto ps = parents;
  return make_result<T>(shape, std::move(out), "concat_dim0", std::move(parents), [ps](detail::TensorNode<T>& self) {
    std::size_t offset = 0;
    for (const auto& p : ps) {
      const std::size_t len = p->data.size();
      if (p->requires_grad) {
        auto g = p->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  require_rank(x.shape(), 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (count == 0 || start + count > n) throw DimensionError("slice_cols out of range");
  std::vector<T> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x[i * n + start + j];
  auto xn = x.node_ptr();
  return make_result<T>({m, count}, std::move(out), "slice_cols", {xn},
                        [xn, m, n, start, count](detail::TensorNode<T>& self) {
                          auto g = xn->grad_buffer();
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += self.grad[i * count + j];
                        });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts[0].dim(0);
  std::size_t n = 0;
  std::vector<NodePtr<T>> parents;
  for (const auto& p : parts) {
    require_rank(p.shape(), 2, "concat_cols");
    if (p.dim(0) != m) throw DimensionError("concat_cols: row counts differ");
    n += p.dim(1);
    parents.push_back(p.node_ptr());
  }
  std::vector<T> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + col + j] = p[i * w + j];
    col += w;
  }
  auto ps = parents;
  return make_result<T>({m, n}, std::move(out), "concat_cols", std::move(parents), [ps, m, n](detail::TensorNode<T>& self) {
    std::size_t col = 0;
    for (const auto& p : ps) {
      const std::size_t w = p->shape[1];
      if (p->requires_grad) {
        auto g = p->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * n + col + j];
      }
      col += w;
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& indices) {
  require_rank(table.shape(), 2, "gather_rows");
  const std::size_t rows = table.dim(0), n = table.dim(1);
  std::vector<T> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw DimensionError("gather_rows: index out of range");
    std::copy_n(table.data().begin() + indices[i] * n, n, out.begin() + i * n);
  }
  auto tn = table.node_ptr();
  return make_result<T>({indices.size(), n}, std::move(out), "gather_rows", {tn},
                        [tn, indices, n](detail::TensorNode<T>& self) {
                          auto g = tn->grad_buffer();
                          for (std::size_t i = 0; i < indices.size(); ++i)
                            for (std::size_t j = 0; j < n; ++j) g[indices[i] * n + j] += self.grad[i * n + j];
                        });
}

template <typename T>
Tensor<T> take(const Tensor<T>& x, const std::vector<std::size_t>& indices, const Shape& shape) {
  if (shape_numel(shape) != indices.size()) throw DimensionError("take: shape does not match index count");
  const auto xs = x.data();
  std::vector<T> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xs.size()) throw DimensionError("take: index out of range");
    out[i] = xs[indices[i]];
  }
  auto xn = x.node_ptr();
  return make_result<T>(shape, std::move(out), "take", {xn}, [xn, indices](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < indices.size(); ++i) g[indices[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "spatial_mean");
  const std::size_t c = x.dim(0), pix = x.dim(1) * x.dim(2);
  std::vector<T> out(c);
  for (std::size_t k = 0; k < c; ++k) {
    double acc = 0.0;
    for (std::size_t p = 0; p < pix; ++p) acc += x[k * pix + p];
    out[k] = static_cast<T>(acc / static_cast<double>(pix));
  }
  auto xn = x.node_ptr();
  return make_result<T>({c}, std::move(out), "spatial_mean", {xn}, [xn, c, pix](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    const T inv = T(1) / static_cast<T>(pix);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t p = 0; p < pix; ++p) g[k * pix + p] += self.grad[k] * inv;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (const T v : x.data()) acc += v;
  auto xn = x.node_ptr();
  return make_result<T>({1}, {static_cast<T>(acc)}, "sum", {xn}, [xn](detail::TensorNode<T>& self) {
    auto g = xn->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse_loss");
  const std::size_t n = a.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>({1}, {static_cast<T>(acc / n)}, "mse_loss", {an, bn}, [an, bn, n](detail::TensorNode<T>& self) {
    const T k = T(2) * self.grad[0] / static_cast<T>(n);
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += k * (an->data[i] - bn->data[i]);
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * (an->data[i] - bn->data[i]);
    }
  });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "l1_loss");
  const std::size_t n = a.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>({1}, {static_cast<T>(acc / n)}, "l1_loss", {an, bn}, [an, bn, n](detail::TensorNode<T>& self) {
    const T k = self.grad[0] / static_cast<T>(n);
    auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += k * sign(an->data[i] - bn->data[i]);
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * sign(an->data[i] - bn->data[i]);
    }
  });
}

#define FIELDGEN_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> add_rows(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                     \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> transpose(const Tensor<T>&);                                                    \
  template Tensor<T> relu(const Tensor<T>&);                                                         \
  template Tensor<T> silu(const Tensor<T>&);                                                         \
  template Tensor<T> gelu(const Tensor<T>&);                                                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                      \
  template Tensor<T> exp(const Tensor<T>&);                                                          \
  template Tensor<T> sqrt(const Tensor<T>&);                                                         \
  template Tensor<T> square(const Tensor<T>&);                                                       \
  template Tensor<T> softmax_lastdim(const Tensor<T>&, const Tensor<T>*);                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, std::size_t,       \
                            std::size_t);                                                            \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                           \
  template Tensor<T> avg_pool2x(const Tensor<T>&);                                                   \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                        \
  template Tensor<T> slice_dim0(const Tensor<T>&, std::size_t, std::size_t);                         \
  template Tensor<T> concat_dim0(const std::vector<Tensor<T>>&);                                     \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                         \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                     \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);                 \
  template Tensor<T> take(const Tensor<T>&, const std::vector<std::size_t>&, const Shape&);           \
  template Tensor<T> spatial_mean(const Tensor<T>&);                                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                          \
  template Tensor<T> mean(const Tensor<T>&);                                                         \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);

FIELDGEN_INSTANTIATE_OPS(float)
FIELDGEN_INSTANTIATE_OPS(double)

}  // namespace fieldgen::ops
