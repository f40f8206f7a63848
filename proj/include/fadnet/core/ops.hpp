#pragma once

// Primitive operators on Tensor4 together with their vector-Jacobian
// products. Everything here is a pure function of its arguments; the
// autograd layer (autograd.hpp) only wires these into a tape.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fadnet/core/tensor.hpp"

namespace fadnet {

enum class Mode { train, eval };

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeom {
  std::size_t c_in, h, w, k, stride, pad, h_out, w_out;
  std::size_t rows() const { return c_in * k * k; }
  std::size_t cols() const { return h_out * w_out; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) throw ShapeError("conv: kernel larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const auto h = static_cast<std::ptrdiff_t>(g.h), w = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const T* xp = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.w_out;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + g.w_out, T(0));
            continue;
          }
          const T* src = xp + iy * w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= w) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const auto h = static_cast<std::ptrdiff_t>(g.h), w = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    T* xp = dx + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= h) continue;
          const T* src = row + oy * g.w_out;
          T* dst = xp + iy * w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
ConvGeom conv_geometry(const Tensor4<T>& x, const Tensor4<T>& weight, std::size_t stride, std::size_t pad,
                       const char* op) {
  const std::size_t k = weight.h();
  if (weight.w() != k || k % 2 == 0) {
    throw ShapeError(std::string(op) + ": kernel must be square with odd extent, got " + weight.shape().str());
  }
  if (stride != 1 && stride != 2) throw ShapeError(std::string(op) + ": stride must be 1 or 2");
  if (x.c() != weight.c()) {
    throw ShapeError(std::string(op) + ": input channels " + std::to_string(x.c()) + " vs kernel " +
                     weight.shape().str() + " (input " + x.shape().str() + ")");
  }
  return ConvGeom{x.c(), x.h(), x.w(), k, stride, pad, conv_out_extent(x.h(), k, stride, pad),
                  conv_out_extent(x.w(), k, stride, pad)};
}

template <typename T>
void check_bias(const Tensor4<T>& bias, std::size_t c, const char* op) {
  if (!bias.empty() && bias.size() != c) {
    throw ShapeError(std::string(op) + ": bias " + bias.shape().str() + " does not match " + std::to_string(c) +
                     " output channels");
  }
}

/// GEMM operands live in Eigen-owned (aligned) storage: Eigen picks its
/// vectorized reduction order from pointer alignment, and mapped tensor
/// planes would make results depend on where the allocator put them.
template <typename T>
void load_operand(const T* plane, const ConvGeom& g, RowMat<T>& dst) {
  if (g.is_pointwise()) std::copy(plane, plane + g.rows() * g.cols(), dst.data());
  else im2col(plane, g, dst.data());
}

}  // namespace detail

/// Dense 2-D convolution (cross-correlation) with zero padding.
/// weight: (c_out, c_in, k, k); bias: (c_out,1,1,1) or empty.
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& bias, std::size_t stride,
                  std::size_t pad) {
  const auto g = detail::conv_geometry(x, weight, stride, pad, "conv2d");
  const std::size_t c_out = weight.n();
  detail::check_bias(bias, c_out, "conv2d");
  Tensor4<T> out(x.n(), c_out, g.h_out, g.w_out);
  const detail::RowMat<T> wm = detail::CMapMat<T>(weight.data(), c_out, g.rows());
  detail::RowMat<T> src(g.rows(), g.cols()), om(c_out, g.cols());
  for (std::size_t n = 0; n < x.n(); ++n) {
    detail::load_operand(x.plane(n, 0), g, src);
    om.noalias() = wm * src;
    T* dst = out.plane(n, 0);
    for (std::size_t o = 0; o < c_out; ++o) {
      const T b = bias.empty() ? T(0) : bias[o];
      for (std::size_t i = 0; i < g.cols(); ++i) dst[o * g.cols() + i] = om(o, i) + b;
    }
  }
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor4<T> dx, dweight, dbias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_out,
                             std::size_t stride, std::size_t pad, bool need_dx = true) {
  const auto g = detail::conv_geometry(x, weight, stride, pad, "conv2d_backward");
  const std::size_t c_out = weight.n();
  ConvGrads<T> r{need_dx ? Tensor4<T>(x.shape()) : Tensor4<T>(), Tensor4<T>(weight.shape()),
                 vector_tensor<T>(c_out)};
  const detail::RowMat<T> wm = detail::CMapMat<T>(weight.data(), c_out, g.rows());
  detail::RowMat<T> src(g.rows(), g.cols()), go(c_out, g.cols()), dcol(g.rows(), g.cols());
  detail::RowMat<T> dw = detail::RowMat<T>::Zero(c_out, g.rows());
  for (std::size_t n = 0; n < x.n(); ++n) {
    const T* gp = grad_out.plane(n, 0);
    std::copy(gp, gp + c_out * g.cols(), go.data());
    detail::load_operand(x.plane(n, 0), g, src);
    dw.noalias() += go * src.transpose();
    for (std::size_t o = 0; o < c_out; ++o) {
      T acc = 0;
      for (std::size_t i = 0; i < g.cols(); ++i) acc += gp[o * g.cols() + i];
      r.dbias[o] += acc;
    }
    if (need_dx) {
      dcol.noalias() = wm.transpose() * go;
      if (g.is_pointwise()) {
        std::copy(dcol.data(), dcol.data() + dcol.size(), r.dx.plane(n, 0));
      } else {
        detail::col2im_add(dcol.data(), g, r.dx.plane(n, 0));
      }
    }
  }
  std::copy(dw.data(), dw.data() + dw.size(), r.dweight.data());
  return r;
}

/// Per-channel k x k convolution. weight: (c, 1, k, k); bias: (c,1,1,1) or empty.
template <typename T>
Tensor4<T> depthwise_conv2d(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& bias,
                            std::size_t stride, std::size_t pad) {
  if (weight.n() != x.c() || weight.c() != 1) {
    throw ShapeError("depthwise_conv2d: kernel " + weight.shape().str() + " does not match input " + x.shape().str());
  }
  const std::size_t k = weight.h();
  if (weight.w() != k || k % 2 == 0) throw ShapeError("depthwise_conv2d: kernel must be square and odd");
  if (stride != 1 && stride != 2) throw ShapeError("depthwise_conv2d: stride must be 1 or 2");
  detail::check_bias(bias, x.c(), "depthwise_conv2d");
  const std::size_t ho = detail::conv_out_extent(x.h(), k, stride, pad);
  const std::size_t wo = detail::conv_out_extent(x.w(), k, stride, pad);
  const auto h = static_cast<std::ptrdiff_t>(x.h()), w = static_cast<std::ptrdiff_t>(x.w());
  Tensor4<T> out(x.n(), x.c(), ho, wo);
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      const T* kern = weight.plane(c, 0);
      const T b = bias.empty() ? T(0) : bias[c];
      T* dst = out.plane(n, c);
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T acc = b;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= h) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= w) continue;
              acc += kern[ky * k + kx] * src[iy * w + ix];
            }
          }
          dst[oy * wo + ox] = acc;
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_out,
                                       std::size_t stride, std::size_t pad) {
  const std::size_t k = weight.h();
  const std::size_t ho = grad_out.h(), wo = grad_out.w();
  const auto h = static_cast<std::ptrdiff_t>(x.h()), w = static_cast<std::ptrdiff_t>(x.w());
  ConvGrads<T> r{Tensor4<T>(x.shape()), Tensor4<T>(weight.shape()), vector_tensor<T>(x.c())};
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      const T* kern = weight.plane(c, 0);
      const T* go = grad_out.plane(n, c);
      T* dx = r.dx.plane(n, c);
      T* dk = r.dweight.plane(c, 0);
      T db = 0;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T gv = go[oy * wo + ox];
          db += gv;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= h) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= w) continue;
              dk[ky * k + kx] += gv * src[iy * w + ix];
              dx[iy * w + ix] += gv * kern[ky * k + kx];
            }
          }
        }
      }
      r.dbias[c] += db;
    }
  }
  return r;
}

/// Depthwise k x k followed by pointwise 1x1 channel mixing.
template <typename T>
Tensor4<T> depthwise_separable_conv(const Tensor4<T>& x, const Tensor4<T>& dw_kernel, const Tensor4<T>& dw_bias,
                                    const Tensor4<T>& pw_kernel, const Tensor4<T>& pw_bias, std::size_t stride,
                                    std::size_t pad) {
  return conv2d(depthwise_conv2d(x, dw_kernel, dw_bias, stride, pad), pw_kernel, pw_bias, 1, 0);
}

template <typename T>
Tensor4<T> leaky_relu(const Tensor4<T>& x, T slope) {
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= T(0) ? x[i] : slope * x[i];
  return out;
}

template <typename T>
Tensor4<T> leaky_relu_backward(const Tensor4<T>& x, const Tensor4<T>& grad_out, T slope) {
  Tensor4<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] >= T(0) ? grad_out[i] : slope * grad_out[i];
  return dx;
}

template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x) {
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
  return out;
}

/// Running statistics of one batch-norm layer.
template <typename T>
struct BatchNormState {
  Tensor4<T> running_mean;
  Tensor4<T> running_var;
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Saved per-channel quantities needed by the backward pass.
template <typename T>
struct BatchNormCache {
  std::vector<T> mean, inv_std;
  Tensor4<T> x_hat;
};

/// Train mode normalizes over (n, h, w) per channel with the biased variance
/// and folds the batch statistics into `state` (unbiased variance, as the
/// running estimate). Eval mode uses `state` unchanged.
template <typename T>
Tensor4<T> batch_norm(const Tensor4<T>& x, const Tensor4<T>& gamma, const Tensor4<T>& beta,
                      Tensor4<T>& running_mean, Tensor4<T>& running_var, Mode mode, BatchNormOptions opt = {},
                      BatchNormCache<T>* cache = nullptr) {
  const std::size_t C = x.c(), plane = x.shape().plane(), count = x.n() * plane;
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C || running_var.size() != C) {
    throw ShapeError("batch_norm: parameter channels " + std::to_string(gamma.size()) + " vs input " +
                     x.shape().str());
  }
  Tensor4<T> out(x.shape());
  if (cache) {
    cache->mean.assign(C, T(0));
    cache->inv_std.assign(C, T(0));
    cache->x_hat = Tensor4<T>(x.shape());
  }
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0, var = 0;
    if (mode == Mode::train) {
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      const double unbiased = count > 1 ? var / static_cast<double>(count - 1) : 0.0;
      var /= static_cast<double>(count);
      running_mean[c] = static_cast<T>((1.0 - opt.momentum) * running_mean[c] + opt.momentum * mean);
      running_var[c] = static_cast<T>((1.0 - opt.momentum) * running_var[c] + opt.momentum * unbiased);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + opt.eps);
    for (std::size_t n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      T* o = out.plane(n, c);
      T* xh = cache ? cache->x_hat.plane(n, c) : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T v = static_cast<T>((p[i] - mean) * inv_std);
        if (xh) xh[i] = v;
        o[i] = v * gamma[c] + beta[c];
      }
    }
    if (cache) {
      cache->mean[c] = static_cast<T>(mean);
      cache->inv_std[c] = static_cast<T>(inv_std);
    }
  }
  return out;
}

template <typename T>
Tensor4<T> batch_norm(const Tensor4<T>& x, const Tensor4<T>& gamma, const Tensor4<T>& beta, BatchNormState<T>& state,
                      Mode mode, BatchNormOptions opt = {}, BatchNormCache<T>* cache = nullptr) {
  return batch_norm(x, gamma, beta, state.running_mean, state.running_var, mode, opt, cache);
}

template <typename T>
struct BatchNormGrads {
  Tensor4<T> dx, dgamma, dbeta;
};

template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor4<T>& grad_out, const Tensor4<T>& gamma,
                                      const BatchNormCache<T>& cache, Mode mode) {
  const std::size_t C = grad_out.c(), plane = grad_out.shape().plane(), count = grad_out.n() * plane;
  BatchNormGrads<T> r{Tensor4<T>(grad_out.shape()), vector_tensor<T>(C), vector_tensor<T>(C)};
  for (std::size_t c = 0; c < C; ++c) {
    double sum_g = 0, sum_gx = 0;
    for (std::size_t n = 0; n < grad_out.n(); ++n) {
      const T* g = grad_out.plane(n, c);
      const T* xh = cache.x_hat.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    r.dbeta[c] = static_cast<T>(sum_g);
    r.dgamma[c] = static_cast<T>(sum_gx);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    const double mg = sum_g / static_cast<double>(count), mgx = sum_gx / static_cast<double>(count);
    for (std::size_t n = 0; n < grad_out.n(); ++n) {
      const T* g = grad_out.plane(n, c);
      const T* xh = cache.x_hat.plane(n, c);
      T* dx = r.dx.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        dx[i] = mode == Mode::train ? static_cast<T>(scale * (g[i] - mg - xh[i] * mgx))
                                    : static_cast<T>(scale * g[i]);
      }
    }
  }
  return r;
}

/// Deterministic uniform stream used for dropout masks.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : gen_(seed) {}
  double next() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 gen_;
};

/// Inverted dropout: kept entries are scaled by 1/(1-p). The mask is
/// returned through `mask_out` (already scaled) for the backward pass.
template <typename T>
Tensor4<T> dropout(const Tensor4<T>& x, double p, Mode mode, std::uint64_t seed, Tensor4<T>* mask_out = nullptr) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) {
    if (mask_out) *mask_out = Tensor4<T>(x.shape(), T(1));
    return x;
  }
  UniformStream rng(seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor4<T> mask(x.shape());
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.next() < p ? T(0) : keep_scale;
    out[i] = x[i] * mask[i];
  }
  if (mask_out) *mask_out = std::move(mask);
  return out;
}

/// Replicates each pixel into a 2x2 block.
template <typename T>
Tensor4<T> nearest_upsample(const Tensor4<T>& x) {
  Tensor4<T> out(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t y = 0; y < out.h(); ++y)
        for (std::size_t xx = 0; xx < out.w(); ++xx) dst[y * out.w() + xx] = src[(y / 2) * x.w() + xx / 2];
    }
  }
  return out;
}

template <typename T>
Tensor4<T> nearest_upsample_backward(const Tensor4<T>& grad_out) {
  Tensor4<T> dx(grad_out.n(), grad_out.c(), grad_out.h() / 2, grad_out.w() / 2);
  for (std::size_t n = 0; n < dx.n(); ++n) {
    for (std::size_t c = 0; c < dx.c(); ++c) {
      const T* g = grad_out.plane(n, c);
      T* d = dx.plane(n, c);
      for (std::size_t y = 0; y < grad_out.h(); ++y)
        for (std::size_t x = 0; x < grad_out.w(); ++x) d[(y / 2) * dx.w() + x / 2] += g[y * grad_out.w() + x];
    }
  }
  return dx;
}

/// Channel concatenation, `a` first.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor4<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t pa = a.c() * a.shape().plane(), pb = b.c() * b.shape().plane();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy_n(a.plane(n, 0), pa, out.plane(n, 0));
    std::copy_n(b.plane(n, 0), pb, out.plane(n, a.c()));
  }
  return out;
}

/// Per-channel scale * x + shift.
template <typename T>
Tensor4<T> channel_affine(const Tensor4<T>& x, const Tensor4<T>& scale, const Tensor4<T>& shift) {
  if (scale.size() != x.c() || shift.size() != x.c()) {
    throw ShapeError("channel_affine: parameters " + scale.shape().str() + " vs input " + x.shape().str());
  }
  Tensor4<T> out(x.shape());
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* p = x.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < x.shape().plane(); ++i) o[i] = scale[c] * p[i] + shift[c];
    }
  return out;
}

template <typename T>
T mse_loss(const Tensor4<T>& pred, const Tensor4<T>& target) {
  pred.require_same(target, "mse_loss");
  if (pred.empty()) throw ShapeError("mse_loss: empty tensors");
  long double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const long double d = static_cast<long double>(pred[i]) - target[i];
    s += d * d;
  }
  return static_cast<T>(s / static_cast<long double>(pred.size()));
}

}  // namespace fadnet
