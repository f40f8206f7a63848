#pragma once

// Shared test oracles: straightforward loop implementations that avoid the
// library's im2col / FFT / tape machinery.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fadnet/core/autograd.hpp"
#include "fadnet/core/tensor.hpp"

namespace fadtest {

using fadnet::Shape4;
using fadnet::Tensor4;

inline Tensor4<double> random_tensor(Shape4 s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor4<double> t(s);
  for (auto& v : t.vec()) v = u(gen);
  return t;
}

/// Cross-correlation with zero padding, one output pixel at a time.
inline Tensor4<double> direct_conv(const Tensor4<double>& x, const Tensor4<double>& w, const Tensor4<double>& b,
                                   std::size_t stride, std::size_t pad) {
  const std::size_t k = w.h();
  const std::size_t oh = (x.h() + 2 * pad - k) / stride + 1, ow = (x.w() + 2 * pad - k) / stride + 1;
  Tensor4<double> out(x.n(), w.n(), oh, ow);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < w.n(); ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double s = b.empty() ? 0.0 : b[o];
          for (std::size_t c = 0; c < x.c(); ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long yy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                const long xc = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
                if (yy < 0 || xc < 0 || yy >= static_cast<long>(x.h()) || xc >= static_cast<long>(x.w())) continue;
                s += x(n, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xc)) * w(o, c, i, j);
              }
          out(n, o, y, xx) = s;
        }
  return out;
}

inline Tensor4<double> direct_depthwise(const Tensor4<double>& x, const Tensor4<double>& w, const Tensor4<double>& b,
                                        std::size_t stride, std::size_t pad) {
  Tensor4<double> out;
  for (std::size_t c = 0; c < x.c(); ++c) {
    Tensor4<double> xc(x.n(), 1, x.h(), x.w()), wc(1, 1, w.h(), w.w()), bc(1, 1, 1, 1, b.empty() ? 0.0 : b[c]);
    for (std::size_t n = 0; n < x.n(); ++n)
      for (std::size_t i = 0; i < x.h() * x.w(); ++i) xc.plane(n, 0)[i] = x.plane(n, c)[i];
    for (std::size_t i = 0; i < w.h() * w.w(); ++i) wc[i] = w.plane(c, 0)[i];
    const Tensor4<double> oc = direct_conv(xc, wc, bc, stride, pad);
    if (out.empty()) out = Tensor4<double>(x.n(), x.c(), oc.h(), oc.w());
    for (std::size_t n = 0; n < x.n(); ++n)
      for (std::size_t i = 0; i < oc.h() * oc.w(); ++i) out.plane(n, c)[i] = oc.plane(n, 0)[i];
  }
  return out;
}

/// Per-plane circular convolution (q * k)[y,x] = sum q[i,j] k[(y-i) mod h, (x-j) mod w].
inline Tensor4<double> circular_conv(const Tensor4<double>& q, const Tensor4<double>& k) {
  Tensor4<double> out(q.shape());
  const std::size_t h = q.h(), w = q.w();
  for (std::size_t n = 0; n < q.n(); ++n)
    for (std::size_t c = 0; c < q.c(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double s = 0;
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) s += q(n, c, i, j) * k(n, c, (y + h - i) % h, (x + w - j) % w);
          out(n, c, y, x) = s;
        }
  return out;
}

inline double max_abs(const Tensor4<double>& t) {
  double m = 0;
  for (double v : t.vec()) m = std::max(m, std::abs(v));
  return m;
}

/// Relative error used by all gradient checks: |a - n| over the larger of
/// |a|, |n| and a floor at 1e-3 of the largest analytic gradient entry of
/// the whole check. Entries whose true gradient is zero (a conv bias feeding
/// train-mode batch norm) would otherwise divide rounding noise by noise.
inline double grad_rel_error(double analytic, double numeric, double scale) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * scale, 1e-12});
  return std::abs(analytic - numeric) / den;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central-difference check of d loss / d inputs. `build` must create the
/// graph on the given tape from the leaves and return a scalar. At most
/// `per_tensor` elements (spread evenly) of each input are perturbed.
inline GradCheckResult grad_check(
    std::vector<Tensor4<double>> inputs,
    const std::function<fadnet::Var<double>(fadnet::Tape<double>&, const std::vector<fadnet::Var<double>>&)>& build,
    std::size_t per_tensor = 1u << 30, double h = 1e-6) {
  using fadnet::Tape;
  using fadnet::Var;
  auto eval = [&](const std::vector<Tensor4<double>>& in) {
    Tape<double> t;
    std::vector<Var<double>> leaves;
    for (const auto& x : in) leaves.push_back(t.leaf(x, false));
    return build(t, leaves).value()[0];
  };
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x, true));
  Var<double> out = build(tape, leaves);
  tape.backward(out);
  GradCheckResult r;
  double scale = 0;
  for (const auto& l : leaves) scale = std::max(scale, max_abs(tape.grad(l.id)));
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const Tensor4<double> g = tape.grad(leaves[t].id);
    const std::size_t n = inputs[t].size();
    const std::size_t stride = std::max<std::size_t>(1, n / std::min(n, per_tensor));
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = inputs[t][i];
      inputs[t][i] = orig + h;
      const double fp = eval(inputs);
      inputs[t][i] = orig - h;
      const double fm = eval(inputs);
      inputs[t][i] = orig;
      const double num = (fp - fm) / (2 * h);
      r.max_rel_error = std::max(r.max_rel_error, grad_rel_error(g[i], num, scale));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace fadtest
