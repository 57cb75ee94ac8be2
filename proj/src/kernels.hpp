#pragma once

// Dense loops shared by the tensor ops. Loop order is fixed so results are
// bitwise reproducible.

#include <cstddef>

namespace fieldgen::kernels {

// c[m,n] += a[m,k] . b[k,n]
template <typename T>
void gemm_acc(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m,
              std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const T av = arow[t];
      const T* brow = b + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dst[n,m] = src[m,n]^T
template <typename T>
void transpose(const T* __restrict src, T* __restrict dst, std::size_t m, std::size_t n) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < n; j0 += kBlock) {
      const std::size_t i1 = i0 + kBlock < m ? i0 + kBlock : m;
      const std::size_t j1 = j0 + kBlock < n ? j0 + kBlock : n;
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * m + i] = src[i * n + j];
    }
  }
}

struct ConvGeometry {
  std::size_t cin, h, w, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t out_pixels() const { return ho * wo; }
};

// cols[cin*kh*kw, ho*wo]
template <typename T>
void im2col(const T* x, T* cols, const ConvGeometry& g) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.out_pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            for (std::size_t ox = 0; ox < g.wo; ++ox) dst[ox] = T(0);
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

// Scatter-add counterpart of im2col.
template <typename T>
void col2im_acc(const T* cols, T* dx, const ConvGeometry& g) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.out_pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace fieldgen::kernels
