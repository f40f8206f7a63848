#pragma once

#include <string>

#include "fadnet/core/tensor.hpp"

namespace fadnet {

/// One level of the orthonormal 2-D Haar decomposition.
/// lh: horizontal detail, hl: vertical detail, hh: diagonal detail.
template <typename T>
struct WaveletSubbands {
  Tensor4<T> ll, lh, hl, hh;

  const Shape4& shape() const { return ll.shape(); }
};

/// Each non-overlapping 2x2 block [a b; c d] maps to
///   LL = (a+b+c+d)/2, LH = (a-b+c-d)/2, HL = (a+b-c-d)/2, HH = (a-b-c+d)/2.
template <typename T>
WaveletSubbands<T> haar_dwt2(const Tensor4<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw ShapeError("haar_dwt2: extents must be even, got " + x.shape().str());
  }
  const Shape4 s{x.n(), x.c(), x.h() / 2, x.w() / 2};
  WaveletSubbands<T> out{Tensor4<T>(s), Tensor4<T>(s), Tensor4<T>(s), Tensor4<T>(s)};
  const T half = T(0.5);
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* ll = out.ll.plane(n, c);
      T* lh = out.lh.plane(n, c);
      T* hl = out.hl.plane(n, c);
      T* hh = out.hh.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y) {
        const T* r0 = src + (2 * y) * x.w();
        const T* r1 = r0 + x.w();
        for (std::size_t xx = 0; xx < s.w; ++xx) {
          const T a = r0[2 * xx], b = r0[2 * xx + 1], c2 = r1[2 * xx], d = r1[2 * xx + 1];
          const std::size_t i = y * s.w + xx;
          ll[i] = (a + b + c2 + d) * half;
          lh[i] = (a - b + c2 - d) * half;
          hl[i] = (a + b - c2 - d) * half;
          hh[i] = (a - b - c2 + d) * half;
        }
      }
    }
  }
  return out;
}

/// Exact inverse of haar_dwt2 (the transform matrix is symmetric and orthogonal).
template <typename T>
Tensor4<T> haar_idwt2(const WaveletSubbands<T>& sb) {
  const Shape4 s = sb.ll.shape();
  if (!(sb.lh.shape() == s) || !(sb.hl.shape() == s) || !(sb.hh.shape() == s)) {
    throw ShapeError("haar_idwt2: subband shapes differ: " + s.str() + " " + sb.lh.shape().str() + " " +
                     sb.hl.shape().str() + " " + sb.hh.shape().str());
  }
  Tensor4<T> out(s.n, s.c, s.h * 2, s.w * 2);
  const T half = T(0.5);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* ll = sb.ll.plane(n, c);
      const T* lh = sb.lh.plane(n, c);
      const T* hl = sb.hl.plane(n, c);
      const T* hh = sb.hh.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y) {
        T* r0 = dst + (2 * y) * out.w();
        T* r1 = r0 + out.w();
        for (std::size_t x = 0; x < s.w; ++x) {
          const std::size_t i = y * s.w + x;
          const T p = ll[i], q = lh[i], r = hl[i], t = hh[i];
          r0[2 * x] = (p + q + r + t) * half;
          r0[2 * x + 1] = (p - q + r - t) * half;
          r1[2 * x] = (p + q - r - t) * half;
          r1[2 * x + 1] = (p - q - r + t) * half;
        }
      }
    }
  }
  return out;
}

}  // namespace fadnet
