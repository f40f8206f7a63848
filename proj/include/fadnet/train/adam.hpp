#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadnet/core/tensor.hpp"

namespace fadnet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // decoupled: theta -= lr * wd * theta
};

template <typename T>
struct AdamState {
  std::vector<Tensor4<T>> m, v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam step over the tensors in `params`. Moments are
/// created lazily so the state mirrors the parameter shapes.
template <typename T>
void adam_step(const std::vector<Tensor4<T>*>& params, const std::vector<Tensor4<T>>& grads, AdamState<T>& state,
               double lr, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->require_same(grads[i], "adam_step");
    params[i]->require_same(state.m[i], "adam_step");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* th = params[i]->data();
    const T* g = grads[i].data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      const double gj = g[j];
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1, vhat = vj / bc2;
      const double old = th[j];
      th[j] = static_cast<T>(old - lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * old));
    }
  }
}

/// Piecewise-constant learning rate keyed by the first epoch of each phase.
using LrTable = std::map<int, double>;

inline LrTable default_lr_table() { return {{0, 1e-4}, {10, 5e-5}, {20, 2.5e-5}, {30, 1.25e-5}}; }

inline void validate_lr_table(const LrTable& table) {
  if (table.empty() || table.begin()->first != 0) throw std::invalid_argument("lr table must start at epoch 0");
  for (const auto& [e, lr] : table)
    if (!(lr >= 0) || !std::isfinite(lr)) throw std::invalid_argument("lr table: bad rate at epoch " + std::to_string(e));
}

inline double lr_schedule(int epoch, const LrTable& table) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch " + std::to_string(epoch));
  validate_lr_table(table);
  auto it = table.upper_bound(epoch);
  return std::prev(it)->second;
}

}  // namespace fadnet
