#pragma once

// Central-difference gradient cases shared by the unit tests and the
// acceptance binary. Every case returns its max relative error.

#include <functional>
#include <string>
#include <vector>

#include "fadnet/core/autograd.hpp"
#include "fadnet/model/fadnet.hpp"
#include "support.hpp"

namespace fadtest {

struct GradCase {
  std::string name;
  std::function<double()> run;
};

using Leaves = std::vector<fadnet::Var<double>>;
using fadnet::Mode;
using fadnet::Tape;
using fadnet::Var;

/// Every tensor of a parameter set replaced by seeded uniform values;
/// running variances kept positive.
inline fadnet::FadNetParams<double> random_params(const fadnet::FadNetConfig& cfg, std::uint64_t seed,
                                                  double scale = 0.5, bool zero_biases = false) {
  fadnet::FadNetParams<double> p = fadnet::init_parameters<double>(cfg, seed);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto kind = p.spec(i).kind;
    if (kind == fadnet::ParamKind::bn_running_var || kind == fadnet::ParamKind::bn_gamma) {
      p[i] = random_tensor(p[i].shape(), seed * 7919 + i, 0.5, 1.5);
    } else if (zero_biases && (kind == fadnet::ParamKind::bias || kind == fadnet::ParamKind::bn_beta ||
                               kind == fadnet::ParamKind::attn_shift || kind == fadnet::ParamKind::bn_running_mean)) {
      p[i].fill(0.0);
    } else {
      p[i] = random_tensor(p[i].shape(), seed * 7919 + i, -scale, scale);
    }
  }
  return p;
}

inline fadnet::FadNetConfig tiny_config(int lfdm_levels = 1) {
  fadnet::FadNetConfig c;
  c.base_channels = 2;
  c.height = c.width = 32;
  c.lfdm_levels = lfdm_levels;
  return c;
}

/// Gradient of a network-level scalar with respect to every trainable
/// tensor (up to `per_tensor` entries each) and the input.
inline double network_grad_error(
    const fadnet::FadNetConfig& cfg, const fadnet::Tensor4<double>& input, Mode mode, std::size_t per_tensor,
    const std::function<Var<double>(fadnet::ForwardContext<double>&, Var<double>)>& body, std::uint64_t seed) {
  using namespace fadnet;
  FadNetParams<double> base = random_params(cfg, seed);
  auto eval = [&](FadNetParams<double> p, const Tensor4<double>& x) {
    Tape<double> t;
    BoundParams<double> b(t, p, false);
    ForwardContext<double> ctx{b, cfg, mode, 1234};
    return body(ctx, t.leaf(x)).value()[0];
  };
  Tape<double> tape;
  FadNetParams<double> work = base;
  BoundParams<double> bound(tape, work, true);
  ForwardContext<double> ctx{bound, cfg, mode, 1234};
  Var<double> xin = tape.leaf(input, true);
  Var<double> out = body(ctx, xin);
  tape.backward(out);

  const double h = 1e-6;
  double worst = 0;
  std::vector<Tensor4<double>> grads;
  for (std::size_t k = 0; k < base.size(); ++k) grads.push_back(bound.grad(k));
  const Tensor4<double> gx = tape.grad(xin.id);
  double scale = max_abs(gx);
  for (std::size_t k = 0; k < base.size(); ++k)
    if (is_trainable(base.spec(k).kind)) scale = std::max(scale, max_abs(grads[k]));
  // perturbed(i, d) evaluates the scalar with entry i of the probed tensor moved by d
  auto probe = [&](const Tensor4<double>& g, const std::function<double(std::size_t, double)>& perturbed) {
    const std::size_t n = g.size();
    const std::size_t stride = std::max<std::size_t>(1, n / std::min(n, per_tensor));
    for (std::size_t i = 0; i < n; i += stride) {
      const double num = (perturbed(i, h) - perturbed(i, -h)) / (2 * h);
      worst = std::max(worst, grad_rel_error(g[i], num, scale));
    }
  };
  for (std::size_t k = 0; k < base.size(); ++k) {
    if (!is_trainable(base.spec(k).kind)) continue;
    probe(grads[k], [&](std::size_t i, double d) {
      FadNetParams<double> p = base;
      p[k][i] += d;
      return eval(std::move(p), input);
    });
  }
  probe(gx, [&](std::size_t i, double d) {
    Tensor4<double> x = input;
    x[i] += d;
    return eval(base, x);
  });
  return worst;
}

inline std::vector<GradCase> gradient_cases() {
  using namespace fadnet;
  auto w = [](const Shape4& s, std::uint64_t seed) { return random_tensor(s, seed); };
  auto op = [](std::vector<Tensor4<double>> in, std::function<Var<double>(Tape<double>&, const Leaves&)> f) {
    return [in = std::move(in), f = std::move(f)] { return grad_check(in, f).max_rel_error; };
  };
  std::vector<GradCase> cases;

  cases.push_back({"conv2d stride 1", op({random_tensor({2, 2, 6, 6}, 21), random_tensor({3, 2, 3, 3}, 22),
                                          random_tensor({3, 1, 1, 1}, 23)},
                                         [w](Tape<double>&, const Leaves& v) {
                                           auto y = ag::conv2d(v[0], v[1], v[2], 1, 1);
                                           return ag::dot(y, w(y.shape(), 20));
                                         })});
  cases.push_back({"conv2d stride 2", op({random_tensor({2, 2, 6, 6}, 24), random_tensor({3, 2, 3, 3}, 25),
                                          random_tensor({3, 1, 1, 1}, 26)},
                                         [w](Tape<double>&, const Leaves& v) {
                                           auto y = ag::conv2d(v[0], v[1], v[2], 2, 1);
                                           return ag::dot(y, w(y.shape(), 27));
                                         })});
  cases.push_back({"depthwise conv", op({random_tensor({2, 3, 6, 6}, 28), random_tensor({3, 1, 5, 5}, 29),
                                         random_tensor({3, 1, 1, 1}, 30)},
                                        [w](Tape<double>&, const Leaves& v) {
                                          auto y = ag::depthwise_conv2d(v[0], v[1], v[2], 1, 2);
                                          return ag::dot(y, w(y.shape(), 31));
                                        })});
  {
    auto x = random_tensor({1, 2, 4, 4}, 32);
    for (auto& v : x.vec()) v += v >= 0 ? 0.1 : -0.1;
    cases.push_back({"leaky relu", op({x}, [w](Tape<double>&, const Leaves& v) {
                       return ag::dot(ag::leaky_relu(v[0], 0.01), w(v[0].shape(), 33));
                     })});
  }
  cases.push_back({"sigmoid", op({random_tensor({1, 2, 4, 4}, 34, -3, 3)}, [w](Tape<double>&, const Leaves& v) {
                     return ag::dot(ag::sigmoid(v[0]), w(v[0].shape(), 35));
                   })});
  for (Mode mode : {Mode::train, Mode::eval}) {
    cases.push_back({mode == Mode::train ? "batch norm train" : "batch norm eval",
                     op({random_tensor({2, 3, 4, 4}, 36), random_tensor({3, 1, 1, 1}, 37, 0.5, 1.5),
                         random_tensor({3, 1, 1, 1}, 38)},
                        [w, mode](Tape<double>&, const Leaves& v) {
                          Tensor4<double> rm = vector_tensor<double>(3, 0.1), rv = vector_tensor<double>(3, 1.3);
                          auto y = ag::batch_norm(v[0], v[1], v[2], rm, rv, mode);
                          return ag::dot(y, w(y.shape(), 39));
                        })});
  }
  cases.push_back({"dropout fixed seed", op({random_tensor({1, 2, 5, 5}, 40)}, [w](Tape<double>&, const Leaves& v) {
                     return ag::dot(ag::dropout(v[0], 0.3, Mode::train, 77), w(v[0].shape(), 41));
                   })});
  cases.push_back({"upsample concat affine mul add mse",
                   op({random_tensor({1, 2, 2, 2}, 42), random_tensor({1, 1, 4, 4}, 43), random_tensor({3, 1, 1, 1}, 44),
                       random_tensor({3, 1, 1, 1}, 45)},
                      [w](Tape<double>&, const Leaves& v) {
                        auto cat = ag::concat_channels(ag::nearest_upsample(v[0]), v[1]);
                        auto aff = ag::channel_affine(cat, v[2], v[3]);
                        auto prod = ag::mul(aff, ag::add(cat, cat));
                        return ag::mse_loss(prod, w(prod.shape(), 46));
                      })});
  cases.push_back({"haar dwt/idwt", op({random_tensor({1, 2, 4, 8}, 47)}, [w](Tape<double>&, const Leaves& v) {
                     auto sb = ag::haar_dwt2(v[0]);
                     auto y = ag::haar_idwt2(ag::mul(sb[0], sb[0]), sb[2], sb[1], ag::add(sb[3], sb[1]));
                     return ag::dot(y, w(y.shape(), 48));
                   })});
  cases.push_back({"frequency split correlation",
                   op({random_tensor({1, 2, 8, 8}, 49), random_tensor({1, 2, 8, 8}, 50)},
                      [w](Tape<double>&, const Leaves& v) {
                        const BandMasks m = radial_band_masks(8, 8, 0.5);
                        auto y = ag::frequency_split_correlation(v[0], v[1], m);
                        return ag::dot(y, w(y.shape(), 51));
                      })});

  const FadNetConfig tiny = tiny_config();
  cases.push_back({"decoder stage (merge, MLSA, LFDM, dual block)", [tiny] {
                     // level 1 of the tiny config: deeper (1,4,16,16), skip (1,2,32,32)
                     const auto skip = random_tensor({1, 2, 32, 32}, 52);
                     return network_grad_error(
                         tiny, random_tensor({1, 4, 16, 16}, 53), Mode::train, 3,
                         [skip](ForwardContext<double>& ctx, Var<double> deeper) {
                           Var<double> y = decoder_merge(ctx, 1, deeper, ctx.tape().leaf(skip));
                           y = mlsa_forward(ctx, 1, y);
                           y = lfdm_forward(ctx, 1, y);
                           y = detail::dual_block(ctx, y, "dec1");
                           return ag::dot(y, random_tensor(y.shape(), 54));
                         },
                         55);
                   }});
  cases.push_back({"tiny network, train mode loss", [tiny] {
                     const auto target = random_tensor({1, 1, 32, 32}, 56, 0.0, 1.0);
                     return network_grad_error(
                         tiny, random_tensor({1, 1, 32, 32}, 57, 0.0, 1.0), Mode::train, 2,
                         [target](ForwardContext<double>& ctx, Var<double> x) {
                           return ag::mse_loss(fadnet_forward(ctx, x), target);
                         },
                         58);
                   }});
  cases.push_back({"tiny network, eval mode loss", [tiny] {
                     const auto target = random_tensor({1, 1, 32, 32}, 59, 0.0, 1.0);
                     return network_grad_error(
                         tiny, random_tensor({1, 1, 32, 32}, 60, 0.0, 1.0), Mode::eval, 2,
                         [target](ForwardContext<double>& ctx, Var<double> x) {
                           return ag::mse_loss(fadnet_forward(ctx, x), target);
                         },
                         61);
                   }});
  return cases;
}

}  // namespace fadtest
