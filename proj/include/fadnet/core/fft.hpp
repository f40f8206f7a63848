#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fadnet/core/tensor.hpp"

namespace fadnet {

using cplx = std::complex<double>;

/// Complex counterpart of Tensor4. Spectra are always held in binary64,
/// whatever the scalar type of the real tensor they came from.
struct ComplexSpectrum {
  Shape4 shape{};
  std::vector<cplx> data;

  ComplexSpectrum() = default;
  explicit ComplexSpectrum(Shape4 s) : shape(s), data(s.size()) {}

  cplx* plane(std::size_t n, std::size_t c) { return data.data() + (n * shape.c + c) * shape.plane(); }
  const cplx* plane(std::size_t n, std::size_t c) const {
    return data.data() + (n * shape.c + c) * shape.plane();
  }
  cplx& at(std::size_t n, std::size_t c, std::size_t u, std::size_t v) {
    return plane(n, c)[u * shape.w + v];
  }
  const cplx& at(std::size_t n, std::size_t c, std::size_t u, std::size_t v) const {
    return plane(n, c)[u * shape.w + v];
  }
};

namespace detail {

/// Iterative radix-2 Cooley-Tukey transform of one contiguous sequence.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), bitrev_(n), twiddle_(n / 2) {
    if (!is_power_of_two(n)) throw ShapeError("fft: extent " + std::to_string(n) + " is not a power of two");
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = cplx(std::cos(a), std::sin(a));
    }
  }

  std::size_t size() const { return n_; }

  /// Unnormalized transform; inverse uses conjugated twiddles.
  void run(cplx* x, bool inverse) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          cplx tw = twiddle_[k * step];
          if (inverse) tw = std::conj(tw);
          const cplx a = x[start + k];
          const cplx b = x[start + k + half] * tw;
          x[start + k] = a + b;
          x[start + k + half] = a - b;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<cplx> twiddle_;
};

/// Unitary 2-D transform of one h x w plane in place.
/// Rows first, then columns through a transposed scratch buffer.
inline void fft2_plane(cplx* p, std::size_t h, std::size_t w, const FftPlan& row_plan,
                       const FftPlan& col_plan, std::vector<cplx>& scratch, bool inverse) {
  for (std::size_t y = 0; y < h; ++y) row_plan.run(p + y * w, inverse);
  scratch.resize(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) scratch[x * h + y] = p[y * w + x];
  for (std::size_t x = 0; x < w; ++x) col_plan.run(scratch.data() + x * h, inverse);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) p[y * w + x] = scratch[x * h + y] * scale;
}

inline void require_pow2_extent(const Shape4& s, const char* op) {
  if (!is_power_of_two(s.h) || !is_power_of_two(s.w)) {
    throw ShapeError(std::string(op) + ": spatial extent " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not a power of two");
  }
}

}  // namespace detail

/// Forward unitary 2-D DFT of every (n, c) plane.
template <typename T>
ComplexSpectrum fft2(const Tensor4<T>& x) {
  detail::require_pow2_extent(x.shape(), "fft2");
  ComplexSpectrum out(x.shape());
  const detail::FftPlan rows(x.w()), cols(x.h());
  std::vector<cplx> scratch;
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      cplx* dst = out.plane(n, c);
      for (std::size_t i = 0; i < x.shape().plane(); ++i) dst[i] = cplx(static_cast<double>(src[i]), 0.0);
      detail::fft2_plane(dst, x.h(), x.w(), rows, cols, scratch, false);
    }
  }
  return out;
}

/// Inverse unitary transform of a spectrum in place (complex result).
inline void ifft2_inplace(ComplexSpectrum& s) {
  detail::require_pow2_extent(s.shape, "ifft2");
  const detail::FftPlan rows(s.shape.w), cols(s.shape.h);
  std::vector<cplx> scratch;
  for (std::size_t n = 0; n < s.shape.n; ++n)
    for (std::size_t c = 0; c < s.shape.c; ++c)
      detail::fft2_plane(s.plane(n, c), s.shape.h, s.shape.w, rows, cols, scratch, true);
}

/// Largest violation of S[u,v] = conj(S[-u,-v]) and where it occurs.
struct SymmetryReport {
  double max_error = 0.0;
  double peak = 0.0;
  std::size_t n = 0, c = 0, u = 0, v = 0;
};

inline SymmetryReport conjugate_symmetry(const ComplexSpectrum& s) {
  SymmetryReport r;
  const std::size_t h = s.shape.h, w = s.shape.w;
  for (std::size_t n = 0; n < s.shape.n; ++n) {
    for (std::size_t c = 0; c < s.shape.c; ++c) {
      const cplx* p = s.plane(n, c);
      for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
          const cplx a = p[u * w + v];
          const cplx b = p[((h - u) % h) * w + (w - v) % w];
          const double e = std::abs(a - std::conj(b));
          r.peak = std::max(r.peak, std::abs(a));
          if (e > r.max_error) {
            r.max_error = e;
            r.n = n, r.c = c, r.u = u, r.v = v;
          }
        }
      }
    }
  }
  return r;
}

/// Both realness checks are relative to max(1, magnitude) so that large
/// feature maps in binary32 training do not trip them on rounding alone.
inline constexpr double kRealnessTolerance = 1e-6;

/// Inverse unitary transform of a conjugate-symmetric spectrum; returns the
/// real part and rejects spectra whose inverse would not be real.
template <typename T>
Tensor4<T> ifft2(const ComplexSpectrum& spec) {
  detail::require_pow2_extent(spec.shape, "ifft2");
  const SymmetryReport sym = conjugate_symmetry(spec);
  if (sym.max_error > kRealnessTolerance * std::max(1.0, sym.peak)) {
    throw NumericError("ifft2: spectrum is not conjugate-symmetric; worst bin (n=" + std::to_string(sym.n) +
                       ", c=" + std::to_string(sym.c) + ", u=" + std::to_string(sym.u) +
                       ", v=" + std::to_string(sym.v) + ") error " + std::to_string(sym.max_error));
  }
  ComplexSpectrum work = spec;
  ifft2_inplace(work);
  Tensor4<T> out(spec.shape);
  double max_imag = 0.0, max_real = 0.0;
  for (std::size_t i = 0; i < work.data.size(); ++i) {
    max_imag = std::max(max_imag, std::abs(work.data[i].imag()));
    max_real = std::max(max_real, std::abs(work.data[i].real()));
    out[i] = static_cast<T>(work.data[i].real());
  }
  if (max_imag >= kRealnessTolerance * std::max(1.0, max_real)) {
    throw NumericError("ifft2: residual imaginary part " + std::to_string(max_imag));
  }
  return out;
}

/// Binary low/high partition of the (h, w) frequency grid by normalized
/// radius. rho = 1 on the axis Nyquist bins; rho == threshold goes high.
struct BandMasks {
  std::size_t h = 0;
  std::size_t w = 0;
  double threshold = 0.0;
  std::vector<std::uint8_t> low;
  std::vector<std::uint8_t> high;
};

inline double normalized_radius(std::size_t u, std::size_t v, std::size_t h, std::size_t w) {
  const auto signed_index = [](std::size_t i, std::size_t n) {
    return i < n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
  };
  const double fu = 2.0 * signed_index(u, h) / static_cast<double>(h);
  const double fv = 2.0 * signed_index(v, w) / static_cast<double>(w);
  return std::sqrt(fu * fu + fv * fv);
}

inline BandMasks radial_band_masks(std::size_t h, std::size_t w, double threshold) {
  if (h == 0 || w == 0 || h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("radial_band_masks: extents must be even, got " + std::to_string(h) + "x" + std::to_string(w));
  }
  if (!(threshold > 0.0 && threshold < std::numbers::sqrt2)) {
    throw std::invalid_argument("radial_band_masks: threshold must lie in (0, sqrt(2))");
  }
  BandMasks m{h, w, threshold, std::vector<std::uint8_t>(h * w), std::vector<std::uint8_t>(h * w)};
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      const bool lo = normalized_radius(u, v, h, w) < threshold;
      m.low[u * w + v] = lo ? 1 : 0;
      m.high[u * w + v] = lo ? 0 : 1;
    }
  }
  return m;
}

}  // namespace fadnet
