#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fadnet/core/tensor.hpp"
#include "fadnet/model/config.hpp"

namespace fadnet {

enum class ParamKind {
  conv_weight,
  bias,
  bn_gamma,
  bn_beta,
  bn_running_mean,
  bn_running_var,
  attn_scale,
  attn_shift,
  zero_weight,  // conv weight that starts at zero (MLSA output projection)
};

inline bool is_trainable(ParamKind k) { return k != ParamKind::bn_running_mean && k != ParamKind::bn_running_var; }

struct ParamSpec {
  std::string name;
  Shape4 shape;
  ParamKind kind;
};

namespace detail {

class LayoutBuilder {
 public:
  std::vector<ParamSpec> specs;

  void conv(const std::string& p, std::size_t c_out, std::size_t c_in, std::size_t k,
            ParamKind weight_kind = ParamKind::conv_weight) {
    specs.push_back({p + ".weight", {c_out, c_in, k, k}, weight_kind});
    specs.push_back({p + ".bias", {c_out, 1, 1, 1}, ParamKind::bias});
  }
  void depthwise(const std::string& p, std::size_t c, std::size_t k) {
    specs.push_back({p + ".weight", {c, 1, k, k}, ParamKind::conv_weight});
    specs.push_back({p + ".bias", {c, 1, 1, 1}, ParamKind::bias});
  }
  void bn(const std::string& p, std::size_t c) {
    specs.push_back({p + ".gamma", {c, 1, 1, 1}, ParamKind::bn_gamma});
    specs.push_back({p + ".beta", {c, 1, 1, 1}, ParamKind::bn_beta});
    specs.push_back({p + ".running_mean", {c, 1, 1, 1}, ParamKind::bn_running_mean});
    specs.push_back({p + ".running_var", {c, 1, 1, 1}, ParamKind::bn_running_var});
  }
  void dsc(const std::string& p, std::size_t c, std::size_t k) {
    depthwise(p + ".dw", c, k);
    conv(p + ".pw", c, c, 1);
  }
  void dual_block(const std::string& p, std::size_t c_in, std::size_t c_out) {
    conv(p + ".conv1", c_out, c_in, 3);
    bn(p + ".bn1", c_out);
    conv(p + ".conv2", c_out, c_out, 3);
    bn(p + ".bn2", c_out);
  }
};

}  // namespace detail

/// Ordered parameter layout of the network. Levels are numbered 1..5 from
/// the full-resolution end; decoder levels run 4..1.
inline std::vector<ParamSpec> parameter_layout(const FadNetConfig& cfg) {
  cfg.validate();
  detail::LayoutBuilder b;
  const int L = cfg.levels;
  for (int i = 1; i <= L; ++i) {
    const std::string e = "enc" + std::to_string(i);
    // the stride-2 downsample keeps channel width, so level i starts from level i-1's width
    b.dual_block(e, i == 1 ? 1 : cfg.channels(i - 2), cfg.channels(i - 1));
    if (i < L) {
      const std::string d = "down" + std::to_string(i);
      b.conv(d + ".conv", cfg.channels(i - 1), cfg.channels(i - 1), 3);
      b.bn(d + ".bn", cfg.channels(i - 1));
    }
  }
  for (int i = L - 1; i >= 1; --i) {
    const std::string d = "dec" + std::to_string(i);
    const std::size_t c = cfg.channels(i - 1);
    const std::size_t cy = 2 * c;
    b.conv(d + ".up", c, cfg.channels(i), 1);
    for (const char* role : {"q", "k", "v"}) {
      b.conv(d + ".mlsa." + role + ".pw", cy, cy, 1);
      b.depthwise(d + ".mlsa." + role + ".dw", cy, 3);
    }
    b.specs.push_back({d + ".mlsa.attn.scale", {cy, 1, 1, 1}, ParamKind::attn_scale});
    b.specs.push_back({d + ".mlsa.attn.shift", {cy, 1, 1, 1}, ParamKind::attn_shift});
    b.conv(d + ".mlsa.proj", cy, cy, 1, ParamKind::zero_weight);
    for (int j = 1; j <= cfg.lfdm_levels; ++j) {
      for (const char* band : {"lh", "hl", "hh"}) {
        b.dsc(d + ".lfdm.l" + std::to_string(j) + "." + band, cy, 5);
      }
    }
    b.dsc(d + ".lfdm.trunk", cy, 5);
    b.dual_block(d, cy, c);
  }
  b.conv("head", 1, cfg.channels(0), 1);
  return b.specs;
}

/// Named, shape-checked parameter set (learnable tensors plus BN running statistics).
template <typename T>
class FadNetParams {
 public:
  FadNetParams() = default;

  explicit FadNetParams(const FadNetConfig& cfg) : config_(cfg), specs_(parameter_layout(cfg)) {
    tensors_.reserve(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      tensors_.emplace_back(specs_[i].shape);
      index_[specs_[i].name] = i;
    }
  }

  const FadNetConfig& config() const { return config_; }
  std::size_t size() const { return specs_.size(); }
  const ParamSpec& spec(std::size_t i) const { return specs_[i]; }
  const std::vector<ParamSpec>& specs() const { return specs_; }

  Tensor4<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor4<T>& operator[](std::size_t i) const { return tensors_[i]; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("FadNetParams: no parameter named '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor4<T>& at(const std::string& name) { return tensors_[index_of(name)]; }
  const Tensor4<T>& at(const std::string& name) const { return tensors_[index_of(name)]; }

  /// Number of learnable scalars (running statistics excluded).
  std::size_t trainable_count() const {
    std::size_t total = 0;
    for (const auto& s : specs_)
      if (is_trainable(s.kind)) total += s.shape.size();
    return total;
  }

  template <typename U>
  FadNetParams<U> cast() const {
    FadNetParams<U> out(config_);
    for (std::size_t i = 0; i < size(); ++i) out[i] = tensors_[i].template cast<U>();
    return out;
  }

  bool operator==(const FadNetParams& o) const { return config_ == o.config_ && tensors_ == o.tensors_; }

 private:
  FadNetConfig config_{};
  std::vector<ParamSpec> specs_;
  std::vector<Tensor4<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Kaiming (fan-in) normal conv weights, zero biases, BN gamma=1 / beta=0,
/// running var 1, attention affine = identity, MLSA projection zero.
template <typename T>
FadNetParams<T> init_parameters(const FadNetConfig& cfg, std::uint64_t seed) {
  FadNetParams<T> p(cfg);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const ParamSpec& s = p.spec(i);
    Tensor4<T>& t = p[i];
    switch (s.kind) {
      case ParamKind::conv_weight: {
        const double fan_in = static_cast<double>(s.shape.c * s.shape.h * s.shape.w);
        const double std = std::sqrt(2.0 / fan_in);
        for (auto& v : t.vec()) v = static_cast<T>(std * normal(gen));
        break;
      }
      case ParamKind::bn_gamma:
      case ParamKind::bn_running_var:
      case ParamKind::attn_scale:
        t.fill(T(1));
        break;
      default:
        t.fill(T(0));
        break;
    }
  }
  return p;
}

}  // namespace fadnet
