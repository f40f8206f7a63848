#pragma once

// Forward model: five-level encoder, four decoder levels each running
// merge -> frequency-split attention -> low-frequency diffusion -> dual
// conv block, and a logistic 1x1 head. All functions build on a Tape so the
// same code serves inference and training.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fadnet/core/autograd.hpp"
#include "fadnet/core/fft.hpp"
#include "fadnet/model/config.hpp"
#include "fadnet/model/params.hpp"

namespace fadnet {

// ---------------------------------------------------------------------------
// Frequency-split correlation

template <typename T>
struct SplitCorrelation {
  Tensor4<T> low, high, att;
};

namespace detail {

inline void require_masks(const Shape4& s, const BandMasks& m, const char* op) {
  if (m.h != s.h || m.w != s.w) {
    throw ShapeError(std::string(op) + ": masks " + std::to_string(m.h) + "x" + std::to_string(m.w) +
                     " do not match features " + s.str());
  }
}

/// sqrt(hw) * mask . a . b (optionally conjugating b), per plane.
inline ComplexSpectrum masked_product(const ComplexSpectrum& a, const ComplexSpectrum& b,
                                      const std::vector<std::uint8_t>& mask, bool conj_b) {
  ComplexSpectrum out(a.shape);
  const std::size_t plane = a.shape.plane();
  const double scale = std::sqrt(static_cast<double>(plane));
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (!mask[i % plane]) continue;
    const cplx bv = conj_b ? std::conj(b.data[i]) : b.data[i];
    out.data[i] = a.data[i] * bv * scale;
  }
  return out;
}

}  // namespace detail

/// Per-channel circular correlation of q and k computed as a spectral
/// product, split into the low and high radial bands. The sqrt(hw) factor
/// undoes the unitary normalization so a unit impulse k reproduces q.
template <typename T>
SplitCorrelation<T> frequency_split_correlation(const Tensor4<T>& q, const Tensor4<T>& k, const BandMasks& masks) {
  q.require_same(k, "frequency_split_correlation");
  detail::require_masks(q.shape(), masks, "frequency_split_correlation");
  const ComplexSpectrum fq = fft2(q), fk = fft2(k);
  SplitCorrelation<T> r;
  r.low = ifft2<T>(detail::masked_product(fq, fk, masks.low, false));
  r.high = ifft2<T>(detail::masked_product(fq, fk, masks.high, false));
  r.att = r.low;
  r.att += r.high;
  return r;
}

namespace ag {

template <typename T>
Var<T> frequency_split_correlation(Var<T> q, Var<T> k, const BandMasks& masks) {
  q.value().require_same(k.value(), "frequency_split_correlation");
  detail::require_masks(q.shape(), masks, "frequency_split_correlation");
  ComplexSpectrum fq = fft2(q.value()), fk = fft2(k.value());
  Tensor4<T> att = ifft2<T>(detail::masked_product(fq, fk, masks.low, false));
  att += ifft2<T>(detail::masked_product(fq, fk, masks.high, false));
  return q.tape->record(
      std::move(att), {q, k},
      [q, k, masks, fq = std::move(fq), fk = std::move(fk)](Tape<T>& t, std::size_t self) {
        const ComplexSpectrum fg = fft2(t.grad(self));
        if (t.requires_grad(q)) {
          Tensor4<T> d = ifft2<T>(detail::masked_product(fg, fk, masks.low, true));
          d += ifft2<T>(detail::masked_product(fg, fk, masks.high, true));
          t.accumulate(q, d);
        }
        if (t.requires_grad(k)) {
          Tensor4<T> d = ifft2<T>(detail::masked_product(fg, fq, masks.low, true));
          d += ifft2<T>(detail::masked_product(fg, fq, masks.high, true));
          t.accumulate(k, d);
        }
      });
}

}  // namespace ag

// ---------------------------------------------------------------------------
// Parameter binding and forward context

/// Exposes a FadNetParams set as tape leaves, created on first use.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, FadNetParams<T>& params, bool requires_grad)
      : tape_(&tape), params_(&params), requires_grad_(requires_grad), vars_(params.size()) {}

  Var<T> operator()(const std::string& name) {
    const std::size_t i = params_->index_of(name);
    if (!vars_[i]) vars_[i] = tape_->leaf((*params_)[i], requires_grad_ && is_trainable(params_->spec(i).kind));
    return *vars_[i];
  }

  Tensor4<T>& raw(const std::string& name) { return params_->at(name); }
  FadNetParams<T>& params() { return *params_; }
  Tape<T>& tape() { return *tape_; }

  /// Gradient of parameter i; zero when the parameter never entered the graph.
  Tensor4<T> grad(std::size_t i) {
    if (!vars_[i] || !tape_->requires_grad(*vars_[i])) return Tensor4<T>((*params_)[i].shape());
    return tape_->grad(vars_[i]->id);
  }

 private:
  Tape<T>* tape_;
  FadNetParams<T>* params_;
  bool requires_grad_;
  std::vector<std::optional<Var<T>>> vars_;
};

inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <typename T>
struct ForwardContext {
  BoundParams<T>& p;
  const FadNetConfig& cfg;
  Mode mode = Mode::eval;
  std::uint64_t dropout_seed = 0;
  std::uint64_t dropout_calls = 0;

  Tape<T>& tape() { return p.tape(); }
  std::uint64_t next_dropout_seed() { return mix_seed(dropout_seed ^ mix_seed(++dropout_calls)); }
  T slope() const { return static_cast<T>(cfg.leaky_slope); }
  BatchNormOptions bn_options() const { return {cfg.bn_eps, cfg.bn_momentum}; }
};

namespace detail {

template <typename T>
Var<T> conv(ForwardContext<T>& ctx, Var<T> x, const std::string& prefix, std::size_t stride, std::size_t pad) {
  return ag::conv2d(x, ctx.p(prefix + ".weight"), ctx.p(prefix + ".bias"), stride, pad);
}

template <typename T>
Var<T> depthwise(ForwardContext<T>& ctx, Var<T> x, const std::string& prefix, std::size_t pad) {
  return ag::depthwise_conv2d(x, ctx.p(prefix + ".weight"), ctx.p(prefix + ".bias"), 1, pad);
}

template <typename T>
Var<T> bn(ForwardContext<T>& ctx, Var<T> x, const std::string& prefix) {
  return ag::batch_norm(x, ctx.p(prefix + ".gamma"), ctx.p(prefix + ".beta"), ctx.p.raw(prefix + ".running_mean"),
                        ctx.p.raw(prefix + ".running_var"), ctx.mode, ctx.bn_options());
}

/// 5x5 depthwise (stride 1, pad 2) followed by 1x1 pointwise.
template <typename T>
Var<T> dsc5(ForwardContext<T>& ctx, Var<T> x, const std::string& prefix) {
  return conv(ctx, depthwise(ctx, x, prefix + ".dw", 2), prefix + ".pw", 1, 0);
}

/// Two rounds of conv3x3 -> BN -> dropout -> LeakyReLU.
template <typename T>
Var<T> dual_block(ForwardContext<T>& ctx, Var<T> x, const std::string& prefix) {
  for (const char* r : {"1", "2"}) {
    x = conv(ctx, x, prefix + ".conv" + r, 1, 1);
    x = bn(ctx, x, prefix + ".bn" + r);
    x = ag::dropout(x, ctx.cfg.dropout_p, ctx.mode, ctx.next_dropout_seed());
    x = ag::leaky_relu(x, ctx.slope());
  }
  return x;
}

}  // namespace detail

template <typename T>
struct EncoderOutput {
  Var<T> skip;
  std::optional<Var<T>> down;
};

/// Encoder level (1-based): dual block, then a stride-2 conv -> BN -> LeakyReLU
/// that halves the extent and keeps the channel count. The last level has no down path.
template <typename T>
EncoderOutput<T> encoder_block(ForwardContext<T>& ctx, int level, Var<T> x) {
  const std::string e = "enc" + std::to_string(level);
  const std::size_t want_c = level == 1 ? 1 : ctx.cfg.channels(level - 2);
  const std::size_t want_h = static_cast<std::size_t>(ctx.cfg.height) >> (level - 1);
  const std::size_t want_w = static_cast<std::size_t>(ctx.cfg.width) >> (level - 1);
  if (x.shape().c != want_c || x.shape().h != want_h || x.shape().w != want_w) {
    throw ShapeError("encoder_block " + std::to_string(level) + ": input " + x.shape().str() + " expected (*," +
                     std::to_string(want_c) + "," + std::to_string(want_h) + "," + std::to_string(want_w) + ")");
  }
  EncoderOutput<T> out{detail::dual_block(ctx, x, e), std::nullopt};
  if (level < ctx.cfg.levels) {
    const std::string d = "down" + std::to_string(level);
    Var<T> y = detail::conv(ctx, out.skip, d + ".conv", 2, 1);
    y = detail::bn(ctx, y, d + ".bn");
    out.down = ag::leaky_relu(y, ctx.slope());
  }
  return out;
}

/// Y = concat(conv1x1(nearest_upsample(deeper)), skip), upsampled channels first.
template <typename T>
Var<T> decoder_merge(ForwardContext<T>& ctx, int level, Var<T> deeper, Var<T> skip) {
  const Shape4 ds = deeper.shape(), ss = skip.shape();
  if (2 * ds.h != ss.h || 2 * ds.w != ss.w || ds.n != ss.n) {
    throw ShapeError("decoder_merge " + std::to_string(level) + ": deeper " + ds.str() + " vs skip " + ss.str());
  }
  Var<T> up = detail::conv(ctx, ag::nearest_upsample(deeper), "dec" + std::to_string(level) + ".up", 1, 0);
  return ag::concat_channels(up, skip);
}

/// Frequency-split attention with residual output:
///   F_x = dw3x3(pw1x1(y)), F_att = low + high band correlation of F_q and F_k,
///   out = y + proj1x1(affine(F_att) * F_v).
template <typename T>
Var<T> mlsa_forward(ForwardContext<T>& ctx, int level, Var<T> y) {
  const std::string m = "dec" + std::to_string(level) + ".mlsa";
  auto extract = [&](const char* role) {
    const std::string r = m + "." + role;
    return detail::depthwise(ctx, detail::conv(ctx, y, r + ".pw", 1, 0), r + ".dw", 1);
  };
  Var<T> fq = extract("q"), fk = extract("k"), fv = extract("v");
  const BandMasks masks = radial_band_masks(y.shape().h, y.shape().w, ctx.cfg.band_threshold);
  Var<T> att = ag::frequency_split_correlation(fq, fk, masks);
  Var<T> weighted = ag::channel_affine(att, ctx.p(m + ".attn.scale"), ctx.p(m + ".attn.shift"));
  Var<T> v_att = ag::mul(weighted, fv);
  return ag::add(y, detail::conv(ctx, v_att, m + ".proj", 1, 0));
}

/// Low-frequency diffusion over `lfdm_levels` Haar levels. Level 1 decomposes
/// y, each deeper level decomposes the previous LL. Reconstruction runs from
/// the deepest level up, adding the deeper reconstruction into the LL slot and
/// refining the three detail bands with 5x5 DSCs; a trunk DSC of y is added last.
template <typename T>
Var<T> lfdm_forward(ForwardContext<T>& ctx, int level, Var<T> y) {
  const std::string f = "dec" + std::to_string(level) + ".lfdm";
  const int n = ctx.cfg.lfdm_levels;
  const std::size_t div = std::size_t{1} << n;
  if (y.shape().h % div != 0 || y.shape().w % div != 0) {
    throw ShapeError("lfdm_forward: extent " + y.shape().str() + " not divisible by " + std::to_string(div));
  }
  std::vector<std::array<Var<T>, 4>> pyramid;
  Var<T> src = y;
  for (int j = 1; j <= n; ++j) {
    pyramid.push_back(ag::haar_dwt2(src));
    src = pyramid.back()[0];
  }
  std::optional<Var<T>> rf;
  for (int j = n; j >= 1; --j) {
    const auto& sb = pyramid[static_cast<std::size_t>(j - 1)];
    const std::string pj = f + ".l" + std::to_string(j);
    Var<T> ll = rf ? ag::add(sb[0], *rf) : sb[0];
    Var<T> lh = detail::dsc5(ctx, sb[1], pj + ".lh");
    Var<T> hl = detail::dsc5(ctx, sb[2], pj + ".hl");
    Var<T> hh = detail::dsc5(ctx, sb[3], pj + ".hh");
    rf = ag::haar_idwt2(ll, lh, hl, hh);
  }
  return ag::add(detail::dsc5(ctx, y, f + ".trunk"), *rf);
}

/// Full network; returns the (n, 1, h, w) probability map.
template <typename T>
Var<T> fadnet_forward(ForwardContext<T>& ctx, Var<T> image) {
  const FadNetConfig& cfg = ctx.cfg;
  if (image.shape().c != 1 || image.shape().h != static_cast<std::size_t>(cfg.height) ||
      image.shape().w != static_cast<std::size_t>(cfg.width)) {
    throw ShapeError("fadnet_forward: image " + image.shape().str() + " does not match config extent " +
                     std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  std::vector<Var<T>> skips;
  Var<T> x = image;
  for (int i = 1; i <= cfg.levels; ++i) {
    EncoderOutput<T> e = encoder_block(ctx, i, x);
    skips.push_back(e.skip);
    if (e.down) x = *e.down;
  }
  Var<T> d = skips.back();
  for (int i = cfg.levels - 1; i >= 1; --i) {
    Var<T> y = decoder_merge(ctx, i, d, skips[static_cast<std::size_t>(i - 1)]);
    y = mlsa_forward(ctx, i, y);
    y = lfdm_forward(ctx, i, y);
    d = detail::dual_block(ctx, y, "dec" + std::to_string(i));
  }
  return ag::sigmoid(detail::conv(ctx, d, "head", 1, 0));
}

/// Convenience inference entry point. `params` is only written in train mode
/// (batch-norm running statistics).
template <typename T>
Tensor4<T> fadnet_forward(const Tensor4<T>& image, FadNetParams<T>& params, Mode mode,
                          std::uint64_t dropout_seed = 0) {
  Tape<T> tape;
  BoundParams<T> bound(tape, params, false);
  ForwardContext<T> ctx{bound, params.config(), mode, dropout_seed};
  Tensor4<T> out = fadnet_forward(ctx, tape.leaf(image)).value();
  ensure_finite(out, "fadnet_forward");
  return out;
}

template <typename T>
Tensor4<T> fadnet_predict(const Tensor4<T>& image, const FadNetParams<T>& params) {
  FadNetParams<T> copy = params;
  return fadnet_forward(image, copy, Mode::eval);
}

}  // namespace fadnet
