#pragma once

// Minimal reverse-mode differentiation over Tensor4 values.
//
// A Tape records every operation as a node holding its output value and a
// closure that propagates the node's gradient into its parents. Nodes are
// appended in evaluation order, so a reverse sweep is a valid topological
// order. Nodes that do not depend on any gradient-requiring leaf carry no
// closure, which keeps eval-mode forwards cheap.

#include <array>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>

#include "fadnet/core/haar.hpp"
#include "fadnet/core/ops.hpp"

namespace fadnet {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor4<T>& value() const { return tape->value(id); }
  const Shape4& shape() const { return value().shape(); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var<T> leaf(Tensor4<T> value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
    return Var<T>{this, nodes_.size() - 1};
  }

  /// Adds an op output. The closure is dropped when no parent needs a gradient.
  Var<T> record(Tensor4<T> value, std::initializer_list<Var<T>> parents, Backward fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : Backward{}});
    return Var<T>{this, nodes_.size() - 1};
  }

  const Tensor4<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var<T>& v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of a node, zero-initialized on first access.
  Tensor4<T>& grad(std::size_t id) {
    Node& nd = nodes_[id];
    if (nd.grad.empty() && !nd.value.empty()) nd.grad = Tensor4<T>(nd.value.shape());
    return nd.grad;
  }
  const Tensor4<T>& grad(const Var<T>& v) { return grad(v.id); }

  void accumulate(std::size_t id, const Tensor4<T>& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor4<T>& dst = grad(id);
    dst += g;
  }
  void accumulate(const Var<T>& v, const Tensor4<T>& g) { accumulate(v.id, g); }

  /// Reverse sweep from a scalar output (seed 1).
  void backward(const Var<T>& out) {
    if (value(out.id).size() != 1) throw ShapeError("Tape::backward: output is not a scalar");
    backward(out, Tensor4<T>(value(out.id).shape(), T(1)));
  }

  void backward(const Var<T>& out, const Tensor4<T>& seed) {
    value(out.id).require_same(seed, "Tape::backward");
    grad(out.id) = seed;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& nd = nodes_[i];
      if (!nd.backward || nd.grad.empty()) continue;
      nd.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor4<T> value;
    Tensor4<T> grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

namespace ag {

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tensor4<T> out = a.value();
  out += b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    t.accumulate(a, t.grad(self));
    t.accumulate(b, t.grad(self));
  });
}

/// Elementwise (Hadamard) product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  a.value().require_same(b.value(), "ag::mul");
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const Tensor4<T>& g = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor4<T> d(g.shape());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * b.value()[i];
      t.accumulate(a, d);
    }
    if (t.requires_grad(b)) {
      Tensor4<T> d(g.shape());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * a.value()[i];
      t.accumulate(b, d);
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t pad) {
  Tensor4<T> out = fadnet::conv2d(x.value(), weight.value(), bias.value(), stride, pad);
  return x.tape->record(std::move(out), {x, weight, bias},
                        [x, weight, bias, stride, pad](Tape<T>& t, std::size_t self) {
                          auto g = conv2d_backward(x.value(), weight.value(), t.grad(self), stride, pad,
                                                   t.requires_grad(x));
                          t.accumulate(weight, g.dweight);
                          t.accumulate(bias, g.dbias);
                          if (t.requires_grad(x)) t.accumulate(x, g.dx);
                        });
}

template <typename T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t pad) {
  Tensor4<T> out = fadnet::depthwise_conv2d(x.value(), weight.value(), bias.value(), stride, pad);
  return x.tape->record(std::move(out), {x, weight, bias},
                        [x, weight, bias, stride, pad](Tape<T>& t, std::size_t self) {
                          auto g = depthwise_conv2d_backward(x.value(), weight.value(), t.grad(self), stride, pad);
                          t.accumulate(weight, g.dweight);
                          t.accumulate(bias, g.dbias);
                          t.accumulate(x, g.dx);
                        });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
  return x.tape->record(fadnet::leaky_relu(x.value(), slope), {x}, [x, slope](Tape<T>& t, std::size_t self) {
    t.accumulate(x, leaky_relu_backward(x.value(), t.grad(self), slope));
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return x.tape->record(fadnet::sigmoid(x.value()), {x}, [x](Tape<T>& t, std::size_t self) {
    const Tensor4<T>& y = t.value(self);
    const Tensor4<T>& g = t.grad(self);
    Tensor4<T> d(g.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * y[i] * (T(1) - y[i]);
    t.accumulate(x, d);
  });
}

/// Batch normalization; `state` is updated in place in train mode.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor4<T>& running_mean, Tensor4<T>& running_var,
                  Mode mode, BatchNormOptions opt = {}) {
  BatchNormCache<T> cache;
  Tensor4<T> out =
      fadnet::batch_norm(x.value(), gamma.value(), beta.value(), running_mean, running_var, mode, opt, &cache);
  return x.tape->record(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, mode, cache = std::move(cache)](Tape<T>& t, std::size_t self) {
                          auto g = batch_norm_backward(t.grad(self), gamma.value(), cache, mode);
                          t.accumulate(x, g.dx);
                          t.accumulate(gamma, g.dgamma);
                          t.accumulate(beta, g.dbeta);
                        });
}

template <typename T>
Var<T> dropout(Var<T> x, double p, Mode mode, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return x;
  Tensor4<T> mask;
  Tensor4<T> out = fadnet::dropout(x.value(), p, mode, seed, &mask);
  return x.tape->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& t, std::size_t self) {
    const Tensor4<T>& g = t.grad(self);
    Tensor4<T> d(g.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * mask[i];
    t.accumulate(x, d);
  });
}

template <typename T>
Var<T> nearest_upsample(Var<T> x) {
  return x.tape->record(fadnet::nearest_upsample(x.value()), {x}, [x](Tape<T>& t, std::size_t self) {
    t.accumulate(x, nearest_upsample_backward(t.grad(self)));
  });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  return a.tape->record(fadnet::concat_channels(a.value(), b.value()), {a, b},
                        [a, b](Tape<T>& t, std::size_t self) {
                          const Tensor4<T>& g = t.grad(self);
                          const std::size_t pa = a.shape().c * a.shape().plane();
                          const std::size_t pb = b.shape().c * b.shape().plane();
                          if (t.requires_grad(a)) {
                            Tensor4<T> d(a.shape());
                            for (std::size_t n = 0; n < g.n(); ++n) std::copy_n(g.plane(n, 0), pa, d.plane(n, 0));
                            t.accumulate(a, d);
                          }
                          if (t.requires_grad(b)) {
                            Tensor4<T> d(b.shape());
                            for (std::size_t n = 0; n < g.n(); ++n)
                              std::copy_n(g.plane(n, a.shape().c), pb, d.plane(n, 0));
                            t.accumulate(b, d);
                          }
                        });
}

template <typename T>
Var<T> channel_affine(Var<T> x, Var<T> scale, Var<T> shift) {
  return x.tape->record(fadnet::channel_affine(x.value(), scale.value(), shift.value()), {x, scale, shift},
                        [x, scale, shift](Tape<T>& t, std::size_t self) {
                          const Tensor4<T>& g = t.grad(self);
                          const Tensor4<T>& xv = x.value();
                          Tensor4<T> dx(g.shape());
                          Tensor4<T> ds(scale.shape()), db(shift.shape());
                          for (std::size_t n = 0; n < g.n(); ++n)
                            for (std::size_t c = 0; c < g.c(); ++c) {
                              const T* gp = g.plane(n, c);
                              const T* xp = xv.plane(n, c);
                              T* dp = dx.plane(n, c);
                              for (std::size_t i = 0; i < g.shape().plane(); ++i) {
                                dp[i] = gp[i] * scale.value()[c];
                                ds[c] += gp[i] * xp[i];
                                db[c] += gp[i];
                              }
                            }
                          t.accumulate(x, dx);
                          t.accumulate(scale, ds);
                          t.accumulate(shift, db);
                        });
}

/// Four subband outputs; the adjoint of the orthonormal transform is its inverse.
template <typename T>
std::array<Var<T>, 4> haar_dwt2(Var<T> x) {
  Tape<T>& tape = *x.tape;
  WaveletSubbands<T> sb = fadnet::haar_dwt2(x.value());
  // A packed node (LL|LH|HL|HH stacked on the batch axis) owns the
  // backward; the four views scatter their gradients into it.
  const Shape4 s = sb.ll.shape();
  Tensor4<T> packed(4 * s.n, s.c, s.h, s.w);
  const std::size_t chunk = s.size();
  std::copy_n(sb.ll.data(), chunk, packed.data());
  std::copy_n(sb.lh.data(), chunk, packed.data() + chunk);
  std::copy_n(sb.hl.data(), chunk, packed.data() + 2 * chunk);
  std::copy_n(sb.hh.data(), chunk, packed.data() + 3 * chunk);
  Var<T> pk = tape.record(std::move(packed), {x}, [x, s](Tape<T>& t, std::size_t self) {
    const Tensor4<T>& g = t.grad(self);
    const std::size_t chunk = s.size();
    WaveletSubbands<T> gs{Tensor4<T>(s), Tensor4<T>(s), Tensor4<T>(s), Tensor4<T>(s)};
    std::copy_n(g.data(), chunk, gs.ll.data());
    std::copy_n(g.data() + chunk, chunk, gs.lh.data());
    std::copy_n(g.data() + 2 * chunk, chunk, gs.hl.data());
    std::copy_n(g.data() + 3 * chunk, chunk, gs.hh.data());
    t.accumulate(x, fadnet::haar_idwt2(gs));
  });
  std::array<Var<T>, 4> out;
  Tensor4<T>* parts[4] = {&sb.ll, &sb.lh, &sb.hl, &sb.hh};
  for (std::size_t b = 0; b < 4; ++b) {
    out[b] = tape.record(std::move(*parts[b]), {pk}, [pk, b, chunk](Tape<T>& t, std::size_t self) {
      const Tensor4<T>& g = t.grad(self);
      Tensor4<T>& dst = t.grad(pk.id);
      for (std::size_t i = 0; i < chunk; ++i) dst[b * chunk + i] += g[i];
    });
  }
  return out;
}

template <typename T>
Var<T> haar_idwt2(Var<T> ll, Var<T> lh, Var<T> hl, Var<T> hh) {
  WaveletSubbands<T> sb{ll.value(), lh.value(), hl.value(), hh.value()};
  return ll.tape->record(fadnet::haar_idwt2(sb), {ll, lh, hl, hh}, [ll, lh, hl, hh](Tape<T>& t, std::size_t self) {
    WaveletSubbands<T> g = fadnet::haar_dwt2(t.grad(self));
    t.accumulate(ll, g.ll);
    t.accumulate(lh, g.lh);
    t.accumulate(hl, g.hl);
    t.accumulate(hh, g.hh);
  });
}

/// Mean squared error against a constant target; scalar output.
template <typename T>
Var<T> mse_loss(Var<T> pred, const Tensor4<T>& target) {
  const T loss = fadnet::mse_loss(pred.value(), target);
  return pred.tape->record(Tensor4<T>(1, 1, 1, 1, loss), {pred}, [pred, target](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    const Tensor4<T>& p = pred.value();
    const T scale = T(2) * g / static_cast<T>(p.size());
    Tensor4<T> d(p.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = scale * (p[i] - target[i]);
    t.accumulate(pred, d);
  });
}

/// <x, weights> as a scalar; used to reduce tensor outputs for gradient checks.
template <typename T>
Var<T> dot(Var<T> x, const Tensor4<T>& weights) {
  x.value().require_same(weights, "ag::dot");
  long double s = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += static_cast<long double>(x.value()[i]) * weights[i];
  return x.tape->record(Tensor4<T>(1, 1, 1, 1, static_cast<T>(s)), {x}, [x, weights](Tape<T>& t, std::size_t self) {
    Tensor4<T> d = weights;
    d *= t.grad(self)[0];
    t.accumulate(x, d);
  });
}

}  // namespace ag
}  // namespace fadnet
