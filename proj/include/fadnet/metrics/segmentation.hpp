#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fadnet/core/image.hpp"

namespace fadnet {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct OverlapMetrics {
  double dice = 0, sensitivity = 0, specificity = 0;
};

inline ConfusionCounts confusion_counts(const Image8& pred, const Image8& gt) {
  require_same_extent(pred, gt, "confusion_counts");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.pixels[i] != 0, g = gt.pixels[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// Both masks empty gives dice 1; a zero denominator gives 1 for sensitivity/specificity.
inline OverlapMetrics overlap_metrics(const ConfusionCounts& c) {
  auto ratio = [](double num, double den) { return den == 0 ? 1.0 : num / den; };
  OverlapMetrics m;
  m.dice = ratio(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn);
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  return m;
}

inline OverlapMetrics overlap_metrics(const Image8& pred, const Image8& gt) {
  return overlap_metrics(confusion_counts(pred, gt));
}

struct PixelPoint {
  long row = 0, col = 0;
  bool operator==(const PixelPoint&) const = default;
};

/// Foreground pixels that are 4-adjacent to background or to the image border, in raster order.
inline std::vector<PixelPoint> surface_points(const Image8& mask) {
  std::vector<PixelPoint> pts;
  for (long y = 0; y < static_cast<long>(mask.height); ++y) {
    for (long x = 0; x < static_cast<long>(mask.width); ++x) {
      if (!mask.on(y, x)) continue;
      if (!mask.on(y - 1, x) || !mask.on(y + 1, x) || !mask.on(y, x - 1) || !mask.on(y, x + 1)) pts.push_back({y, x});
    }
  }
  return pts;
}

class EmptySurfaceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_surface(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b, const char* op) {
  if (a.empty() || b.empty()) throw EmptySurfaceError(std::string(op) + ": empty surface point set");
}

/// Nearest-neighbour distance from every point of `from` to the set `to`.
inline std::vector<double> directed_distances(const std::vector<PixelPoint>& from, const std::vector<PixelPoint>& to) {
  std::vector<double> d;
  d.reserve(from.size());
  for (const auto& p : from) {
    long best = std::numeric_limits<long>::max();
    for (const auto& q : to) {
      const long dy = p.row - q.row, dx = p.col - q.col;
      best = std::min(best, dy * dy + dx * dx);
    }
    d.push_back(std::sqrt(static_cast<double>(best)));
  }
  return d;
}

}  // namespace detail

/// Linear-interpolation percentile (q in [0,100]) of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile: empty sample");
  if (!(q >= 0 && q <= 100)) throw std::invalid_argument("percentile: q outside [0,100]");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * f;
}

/// Symmetric percentile surface distance (95th by default), in pixels.
inline double hd95(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b, double q = 95.0) {
  detail::require_surface(a, b, "hd95");
  return std::max(percentile(detail::directed_distances(a, b), q), percentile(detail::directed_distances(b, a), q));
}

/// Average symmetric surface distance, in pixels.
inline double assd(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b) {
  detail::require_surface(a, b, "assd");
  double s = 0;
  for (double d : detail::directed_distances(a, b)) s += d;
  for (double d : detail::directed_distances(b, a)) s += d;
  return s / static_cast<double>(a.size() + b.size());
}

}  // namespace fadnet
