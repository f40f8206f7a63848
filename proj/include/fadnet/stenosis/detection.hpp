#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "fadnet/stenosis/centerline.hpp"

namespace fadnet {

/// How the curvature gates read the smoothed diameter profile.
enum class CurvatureUnit {
  // raw second difference of the smoothed profile in mm per sample^2
  mm_per_sample2,
  // second difference at stride `curvature_stride`, in percent of the
  // segment's largest smoothed diameter
  percent_of_max,
};

struct DetectionConfig {
  double match_radius = 10.0;   // px
  int min_length = 20;          // px along the centerline
  double min_diameter_mm = 1.8;
  double min_ratio = 0.1;
  double gate_low = -2.0;
  double gate_high = 2.0;
  double pixel_spacing = 0.3;   // mm / px
  int smoothing_window = 5;     // samples, odd
  CurvatureUnit curvature_unit = CurvatureUnit::percent_of_max;
  int curvature_stride = 5;
  bool trim_ends = true;        // ignore about one radius of samples at each segment end

  void validate() const {
    if (!(pixel_spacing > 0)) throw std::invalid_argument("DetectionConfig: pixel_spacing must be positive");
    if (!(match_radius > 0)) throw std::invalid_argument("DetectionConfig: match_radius must be positive");
    if (smoothing_window < 1 || smoothing_window % 2 == 0)
      throw std::invalid_argument("DetectionConfig: smoothing_window must be odd and positive");
    if (curvature_stride < 1) throw std::invalid_argument("DetectionConfig: curvature_stride must be >= 1");
    if (min_length < 1) throw std::invalid_argument("DetectionConfig: min_length must be >= 1");
  }
};

NLOHMANN_JSON_SERIALIZE_ENUM(CurvatureUnit, {{CurvatureUnit::mm_per_sample2, "mm_per_sample2"},
                                             {CurvatureUnit::percent_of_max, "percent_of_max"}})

inline void to_json(nlohmann::json& j, const DetectionConfig& c) {
  j = nlohmann::json{{"match_radius", c.match_radius},
                     {"min_length", c.min_length},
                     {"min_diameter_mm", c.min_diameter_mm},
                     {"min_ratio", c.min_ratio},
                     {"gate_low", c.gate_low},
                     {"gate_high", c.gate_high},
                     {"pixel_spacing", c.pixel_spacing},
                     {"smoothing_window", c.smoothing_window},
                     {"curvature_unit", c.curvature_unit},
                     {"curvature_stride", c.curvature_stride},
                     {"trim_ends", c.trim_ends}};
}

inline void from_json(const nlohmann::json& j, DetectionConfig& c) {
  const nlohmann::json defaults = c;
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) throw std::invalid_argument("DetectionConfig: unknown key '" + k + "'");
  c.match_radius = j.value("match_radius", c.match_radius);
  c.min_length = j.value("min_length", c.min_length);
  c.min_diameter_mm = j.value("min_diameter_mm", c.min_diameter_mm);
  c.min_ratio = j.value("min_ratio", c.min_ratio);
  c.gate_low = j.value("gate_low", c.gate_low);
  c.gate_high = j.value("gate_high", c.gate_high);
  c.pixel_spacing = j.value("pixel_spacing", c.pixel_spacing);
  c.smoothing_window = j.value("smoothing_window", c.smoothing_window);
  c.curvature_unit = j.value("curvature_unit", c.curvature_unit);
  c.curvature_stride = j.value("curvature_stride", c.curvature_stride);
  c.trim_ends = j.value("trim_ends", c.trim_ends);
  c.validate();
}

enum class Severity { minimal, mild, moderate, severe };

inline const char* severity_name(Severity s) {
  switch (s) {
    case Severity::minimal: return "minimal";
    case Severity::mild: return "mild";
    case Severity::moderate: return "moderate";
    default: return "severe";
  }
}

/// SCCT bins on the ratio rounded half-up to whole percent.
inline Severity severity_for(double b_percent) {
  const double r = std::floor(b_percent + 0.5);
  if (r < 25) return Severity::minimal;
  if (r < 50) return Severity::mild;
  if (r < 70) return Severity::moderate;
  return Severity::severe;
}

struct GtStenosis {
  long x = 0, y = 0;
  double b_percent = 0;
  int segment_id = 0;
};

inline void to_json(nlohmann::json& j, const GtStenosis& g) {
  j = nlohmann::json{{"x", g.x}, {"y", g.y}, {"b_percent", g.b_percent}, {"segment_id", g.segment_id}};
}
inline void from_json(const nlohmann::json& j, GtStenosis& g) {
  g.x = j.at("x").get<long>();
  g.y = j.at("y").get<long>();
  g.b_percent = j.at("b_percent").get<double>();
  g.segment_id = j.value("segment_id", 0);
}

struct StenosisPoint {
  long x = 0, y = 0;
  double d_min_mm = 0, d_ref_mm = 0;
  double b_percent = 0;
  Severity severity = Severity::minimal;
  int segment_id = 0;
};

struct DiameterProfile {
  std::vector<double> d_px;      // 2 * EDT along the chain
  std::vector<double> d_mm;
  std::vector<double> smoothed;  // mm
};

/// Centered moving average; the window shrinks symmetrically near the ends.
inline std::vector<double> moving_average(const std::vector<double>& v, int window) {
  const long n = static_cast<long>(v.size()), half = window / 2;
  std::vector<double> out(v.size());
  for (long i = 0; i < n; ++i) {
    const long h = std::min({half, i, n - 1 - i});
    double s = 0;
    for (long k = i - h; k <= i + h; ++k) s += v[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(2 * h + 1);
  }
  return out;
}

inline std::vector<DiameterProfile> diameter_profiles(const CenterlineGraph& g, const std::vector<double>& edt,
                                                      const DetectionConfig& cfg) {
  if (edt.size() != g.skeleton.size()) throw ShapeError("diameter_profiles: EDT extent differs from skeleton");
  std::vector<DiameterProfile> out;
  for (const auto& seg : g.segments) {
    DiameterProfile p;
    for (const auto& q : seg.pixels) {
      const double d = 2.0 * edt[static_cast<std::size_t>(q.row) * g.skeleton.width + static_cast<std::size_t>(q.col)];
      p.d_px.push_back(d);
      p.d_mm.push_back(d * cfg.pixel_spacing);
    }
    p.smoothed = moving_average(p.d_mm, cfg.smoothing_window);
    out.push_back(std::move(p));
  }
  return out;
}

namespace detail {

/// Centres of strict local extrema (plateau-aware) strictly inside [lo, hi).
inline std::vector<std::size_t> local_extrema(const std::vector<double>& v, std::size_t lo, std::size_t hi, bool minima) {
  std::vector<std::size_t> out;
  std::size_t a = lo;
  while (a < hi) {
    std::size_t b = a;
    while (b + 1 < hi && v[b + 1] == v[a]) ++b;
    if (a > lo && b + 1 < hi) {
      const bool is_ext = minima ? (v[a - 1] > v[a] && v[b + 1] > v[b]) : (v[a - 1] < v[a] && v[b + 1] < v[b]);
      if (is_ext) out.push_back((a + b) / 2);
    }
    a = b + 1;
  }
  return out;
}

}  // namespace detail

/// Curvature trace used by the gates, aligned with the profile (zero where undefined).
inline std::vector<double> curvature_trace(const std::vector<double>& smoothed, const DetectionConfig& cfg) {
  const std::size_t n = smoothed.size();
  std::vector<double> dd(n, 0.0);
  if (n == 0) return dd;
  const bool pct = cfg.curvature_unit == CurvatureUnit::percent_of_max;
  const std::size_t k = pct ? static_cast<std::size_t>(cfg.curvature_stride) : 1;
  const double top = *std::max_element(smoothed.begin(), smoothed.end());
  const double scale = pct ? (top > 0 ? 100.0 / top : 0.0) : 1.0;
  for (std::size_t i = k; i + k < n; ++i) dd[i] = (smoothed[i - k] - 2 * smoothed[i] + smoothed[i + k]) * scale;
  return dd;
}

/// Grades every qualifying segment and emits at most one point per segment,
/// at the deepest local minimum of the smoothed diameter profile.
inline std::vector<StenosisPoint> detect_stenosis(const CenterlineGraph& g, const std::vector<DiameterProfile>& profiles,
                                                  const DetectionConfig& cfg) {
  cfg.validate();
  if (profiles.size() != g.segments.size()) throw ShapeError("detect_stenosis: one profile per segment required");
  std::vector<StenosisPoint> out;
  for (std::size_t si = 0; si < g.segments.size(); ++si) {
    const auto& seg = g.segments[si];
    const auto& p = profiles[si];
    if (p.d_mm.size() != seg.pixels.size() || p.smoothed.size() != seg.pixels.size())
      throw ShapeError("detect_stenosis: profile length differs from segment " + std::to_string(seg.id));
    const std::size_t n = seg.pixels.size();
    if (n < static_cast<std::size_t>(cfg.min_length)) continue;
    if (*std::max_element(p.d_mm.begin(), p.d_mm.end()) < cfg.min_diameter_mm) continue;

    std::size_t trim = 0;
    if (cfg.trim_ends && !seg.closed) {
      trim = static_cast<std::size_t>(std::ceil(*std::max_element(p.d_px.begin(), p.d_px.end()) / 2.0));
    }
    if (n < 2 * trim + 3) continue;
    const std::size_t lo = trim, hi = n - trim;
    const std::vector<double> inner(p.smoothed.begin() + static_cast<long>(lo), p.smoothed.begin() + static_cast<long>(hi));
    const std::vector<double> dd = curvature_trace(inner, cfg);
    if (std::none_of(dd.begin(), dd.end(), [&](double v) { return v <= cfg.gate_low; })) continue;

    const auto minima = detail::local_extrema(inner, 0, inner.size(), true);
    if (minima.empty()) continue;
    std::size_t at = minima[0];
    for (std::size_t m : minima)
      if (inner[m] < inner[at]) at = m;
    const double d_min = inner[at];

    const auto maxima = detail::local_extrema(inner, 0, inner.size(), false);
    const bool high_gate = std::any_of(dd.begin(), dd.end(), [&](double v) { return v >= cfg.gate_high; });
    double d_ref = *std::max_element(inner.begin(), inner.end());
    if (high_gate && !maxima.empty()) {
      d_ref = inner[maxima[0]];
      for (std::size_t m : maxima) d_ref = std::max(d_ref, inner[m]);
    }
    if (!(d_ref > 0)) continue;
    const double b = (1.0 - d_min / d_ref) * 100.0;
    if (b < cfg.min_ratio * 100.0) continue;
    const auto& px = seg.pixels[lo + at];
    out.push_back({px.col, px.row, d_min, d_ref, b, severity_for(b), seg.id});
  }
  return out;
}

struct StenosisAnalysis {
  CenterlineGraph graph;
  std::vector<double> edt;
  std::vector<DiameterProfile> profiles;
  std::vector<StenosisPoint> points;
};

/// Skeleton -> EDT -> segments -> profiles -> graded points for one binary mask.
inline StenosisAnalysis analyze_stenoses(const Image8& mask, const DetectionConfig& cfg) {
  StenosisAnalysis a;
  const Image8 m = binarized(mask);
  a.graph = decompose_segments(skeletonize(m));
  a.edt = distance_transform(m);
  a.profiles = diameter_profiles(a.graph, a.edt, cfg);
  a.points = detect_stenosis(a.graph, a.profiles, cfg);
  return a;
}

struct MatchPair {
  std::size_t pred = 0, gt = 0;
  double distance = 0;
  double b_e = 0, b_g = 0;  // fractions
};

struct MatchResult {
  std::vector<MatchPair> tp;
  std::vector<std::size_t> fp;  // indices into the predictions
  std::vector<std::size_t> fn;  // indices into the ground truth
};

/// Greedy nearest-first one-to-one assignment of predictions to ground truth within radius r.
inline MatchResult match_with_ground_truth(const std::vector<StenosisPoint>& pred, const std::vector<GtStenosis>& gt,
                                           double r) {
  if (!(r > 0)) throw std::invalid_argument("match_with_ground_truth: radius must be positive");
  std::vector<std::tuple<long, std::size_t, std::size_t>> cand;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const long dx = pred[i].x - gt[j].x, dy = pred[i].y - gt[j].y;
      const long d2 = dx * dx + dy * dy;
      if (static_cast<double>(d2) <= r * r) cand.emplace_back(d2, i, j);
    }
  std::sort(cand.begin(), cand.end());
  std::vector<std::uint8_t> used_p(pred.size(), 0), used_g(gt.size(), 0);
  MatchResult m;
  for (const auto& [d2, i, j] : cand) {
    if (used_p[i] || used_g[j]) continue;
    used_p[i] = used_g[j] = 1;
    m.tp.push_back({i, j, std::sqrt(static_cast<double>(d2)), pred[i].b_percent / 100.0, gt[j].b_percent / 100.0});
  }
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (!used_p[i]) m.fp.push_back(i);
  for (std::size_t j = 0; j < gt.size(); ++j)
    if (!used_g[j]) m.fn.push_back(j);
  return m;
}

struct StenosisMetrics {
  std::size_t tp = 0, fp = 0, fn = 0;
  std::optional<double> tpr, ppv, armse, rrmse;
  std::vector<std::string> diagnostics;
};

/// Detected over total planted points.
inline std::optional<double> detection_ratio(std::size_t detected, std::size_t total) {
  if (total == 0) return std::nullopt;
  return static_cast<double>(detected) / static_cast<double>(total);
}

inline StenosisMetrics detection_rates(std::size_t tp, std::size_t fp, std::size_t fn) {
  StenosisMetrics s;
  s.tp = tp, s.fp = fp, s.fn = fn;
  if (tp + fn > 0) s.tpr = static_cast<double>(tp) / static_cast<double>(tp + fn);
  else s.diagnostics.push_back("tpr undefined: no ground-truth points");
  if (tp + fp > 0) s.ppv = static_cast<double>(tp) / static_cast<double>(tp + fp);
  else s.diagnostics.push_back("ppv undefined: no predicted points");
  return s;
}

/// TPR, PPV and the absolute / relative RMS error of matched ratios (as fractions).
inline StenosisMetrics stenosis_metrics(const MatchResult& m) {
  StenosisMetrics s = detection_rates(m.tp.size(), m.fp.size(), m.fn.size());
  if (m.tp.empty()) {
    s.diagnostics.push_back("armse/rrmse undefined: no matched pairs");
    return s;
  }
  double sa = 0, sr = 0;
  bool rel_ok = true;
  for (const auto& p : m.tp) {
    const double e = p.b_e - p.b_g;
    sa += e * e;
    if (p.b_g > 0) sr += (e / p.b_g) * (e / p.b_g);
    else rel_ok = false;
  }
  const double n = static_cast<double>(m.tp.size());
  s.armse = std::sqrt(sa / n);
  if (rel_ok) s.rrmse = std::sqrt(sr / n);
  else s.diagnostics.push_back("rrmse undefined: a matched ground-truth ratio is zero");
  return s;
}

}  // namespace fadnet
