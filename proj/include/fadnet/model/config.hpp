#pragma once

#include <json.hpp>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "fadnet/core/tensor.hpp"

namespace fadnet {

/// Network hyper-parameters. Every parameter shape is derived from this alone.
struct FadNetConfig {
  int levels = 5;
  int base_channels = 16;
  int lfdm_levels = 2;
  double dropout_p = 0.3;
  double leaky_slope = 0.01;
  double band_threshold = 0.5;
  int height = 64;
  int width = 64;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  /// Channel width of encoder level i (0-based): base * 2^i.
  std::size_t channels(int level) const { return static_cast<std::size_t>(base_channels) << level; }

  /// Required divisor of the input extent: 2^(levels - 1 + lfdm_levels).
  std::size_t extent_divisor() const { return std::size_t{1} << (levels - 1 + lfdm_levels); }

  void validate() const {
    if (levels != 5) throw std::invalid_argument("FadNetConfig: levels is fixed at 5");
    if (base_channels < 1) throw std::invalid_argument("FadNetConfig: base_channels must be positive");
    if (lfdm_levels < 1) throw std::invalid_argument("FadNetConfig: lfdm_levels must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("FadNetConfig: dropout_p outside [0,1)");
    if (height <= 0 || width <= 0 || !is_power_of_two(static_cast<std::size_t>(height)) ||
        !is_power_of_two(static_cast<std::size_t>(width))) {
      throw std::invalid_argument("FadNetConfig: input extent must be a power of two");
    }
    const auto d = extent_divisor();
    if (static_cast<std::size_t>(height) % d != 0 || static_cast<std::size_t>(width) % d != 0) {
      throw std::invalid_argument("FadNetConfig: extent " + std::to_string(height) + "x" + std::to_string(width) +
                                  " not divisible by " + std::to_string(d));
    }
  }

  bool operator==(const FadNetConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const FadNetConfig& c) {
  j = nlohmann::json{{"levels", c.levels},           {"base_channels", c.base_channels},
                     {"lfdm_levels", c.lfdm_levels}, {"dropout_p", c.dropout_p},
                     {"leaky_slope", c.leaky_slope}, {"band_threshold", c.band_threshold},
                     {"height", c.height},           {"width", c.width},
                     {"bn_momentum", c.bn_momentum}, {"bn_eps", c.bn_eps}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, FadNetConfig& c) {
  static const std::vector<std::string> known = {"levels",      "base_channels", "lfdm_levels", "dropout_p",
                                                 "leaky_slope", "band_threshold", "height",     "width",
                                                 "bn_momentum", "bn_eps"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw std::invalid_argument("FadNetConfig: unknown key '" + k + "'");
    }
  }
  c.levels = j.value("levels", c.levels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.lfdm_levels = j.value("lfdm_levels", c.lfdm_levels);
  c.dropout_p = j.value("dropout_p", c.dropout_p);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.band_threshold = j.value("band_threshold", c.band_threshold);
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.bn_eps = j.value("bn_eps", c.bn_eps);
}

}  // namespace fadnet
