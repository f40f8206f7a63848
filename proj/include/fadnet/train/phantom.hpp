#pragma once

// Synthetic angiogram phantoms: a branching tube tree rendered as a union of
// disks along densely sampled centerlines, darkened against a shaded
// background, blurred and corrupted by Gaussian noise. Stenoses scale the
// local radius by a Gaussian dip so the narrowest point has ratio b.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadnet/core/image.hpp"
#include "fadnet/stenosis/detection.hpp"

namespace fadnet {

class InfeasiblePhantomError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PhantomSpec {
  int extent = 64;
  int tree_depth = 2;  // 1 = single vessel, at most 3 generations
  double radius_min = 3.0;
  double radius_max = 5.0;
  int stenosis_count = 1;
  double ratio_min = 0.2;
  double ratio_max = 0.7;
  double stenosis_sigma = 2.5;  // Gaussian width of the narrowing along the centerline, px
  double taper = 0.15;          // fractional radius loss from branch start to end
  double contrast = 0.45;
  double blur_sigma = 1.0;
  double noise_sigma = 0.03;

  void validate() const {
    if (extent < 16 || !is_power_of_two(static_cast<std::size_t>(extent)))
      throw std::invalid_argument("PhantomSpec: extent must be a power of two >= 16");
    if (tree_depth < 1 || tree_depth > 3) throw std::invalid_argument("PhantomSpec: tree_depth must be in [1,3]");
    if (!(radius_min > 0 && radius_min <= radius_max)) throw std::invalid_argument("PhantomSpec: bad radius range");
    if (stenosis_count < 0) throw std::invalid_argument("PhantomSpec: negative stenosis_count");
    if (!(ratio_min > 0 && ratio_min <= ratio_max && ratio_max < 1))
      throw std::invalid_argument("PhantomSpec: ratio range must satisfy 0 < min <= max < 1");
    if (!(stenosis_sigma > 0) || !(taper >= 0 && taper < 1)) throw std::invalid_argument("PhantomSpec: bad shape");
    if (radius_min * (1 - taper) * (1 - ratio_max) < 0.75)
      throw InfeasiblePhantomError("PhantomSpec: narrowest stenosis neck below 0.75 px cannot be rendered");
  }
};

inline void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = nlohmann::json{{"extent", s.extent},
                     {"tree_depth", s.tree_depth},
                     {"radius_min", s.radius_min},
                     {"radius_max", s.radius_max},
                     {"stenosis_count", s.stenosis_count},
                     {"ratio_min", s.ratio_min},
                     {"ratio_max", s.ratio_max},
                     {"stenosis_sigma", s.stenosis_sigma},
                     {"taper", s.taper},
                     {"contrast", s.contrast},
                     {"blur_sigma", s.blur_sigma},
                     {"noise_sigma", s.noise_sigma}};
}

inline void from_json(const nlohmann::json& j, PhantomSpec& s) {
  nlohmann::json defaults = s;
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) throw std::invalid_argument("PhantomSpec: unknown key '" + k + "'");
  }
  s.extent = j.value("extent", s.extent);
  s.tree_depth = j.value("tree_depth", s.tree_depth);
  s.radius_min = j.value("radius_min", s.radius_min);
  s.radius_max = j.value("radius_max", s.radius_max);
  s.stenosis_count = j.value("stenosis_count", s.stenosis_count);
  s.ratio_min = j.value("ratio_min", s.ratio_min);
  s.ratio_max = j.value("ratio_max", s.ratio_max);
  s.stenosis_sigma = j.value("stenosis_sigma", s.stenosis_sigma);
  s.taper = j.value("taper", s.taper);
  s.contrast = j.value("contrast", s.contrast);
  s.blur_sigma = j.value("blur_sigma", s.blur_sigma);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
}

struct CenterSample {
  double x, y, r, s;  // position, radius, arclength from branch start
};

struct PhantomSample {
  Image8 image;  // grayscale angiogram
  Image8 mask;   // 0/1
  std::vector<GtStenosis> gt;
  std::vector<std::vector<CenterSample>> branches;
  std::uint64_t seed = 0;
};

namespace detail {

class PhantomRng {
 public:
  explicit PhantomRng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double normal() {
    // Box-Muller keeps the stream identical across standard libraries.
    const double u1 = 1.0 - uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

 private:
  std::mt19937_64 gen_;
};

constexpr double kStep = 0.5;

/// Wandering polyline from (x, y) along heading `theta`, sampled every 0.5 px,
/// stopping at `length` or when it leaves the inner margin.
inline std::vector<CenterSample> grow_branch(PhantomRng& rng, double x, double y, double theta, double length,
                                             double r0, double taper, double extent, double margin) {
  std::vector<CenterSample> out;
  const double curl = rng.uniform(-0.03, 0.03);
  double s = 0;
  while (s <= length) {
    if (x < margin || y < margin || x > extent - 1 - margin || y > extent - 1 - margin) break;
    out.push_back({x, y, r0 * (1.0 - taper * s / length), s});
    theta += curl * kStep + 0.02 * rng.normal();
    x += kStep * std::cos(theta);
    y += kStep * std::sin(theta);
    s += kStep;
  }
  return out;
}

inline void render_disk(Image8& mask, double cx, double cy, double r) {
  const long y0 = std::max(0L, static_cast<long>(std::floor(cy - r))),
             y1 = std::min(static_cast<long>(mask.height) - 1, static_cast<long>(std::ceil(cy + r)));
  const long x0 = std::max(0L, static_cast<long>(std::floor(cx - r))),
             x1 = std::min(static_cast<long>(mask.width) - 1, static_cast<long>(std::ceil(cx + r)));
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r * r) mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1;
    }
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const int half = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(2 * half + 1);
  double sum = 0;
  for (int i = -half; i <= half; ++i) sum += k[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with clamped borders.
inline std::vector<double> blur(const std::vector<double>& img, std::size_t h, std::size_t w, double sigma) {
  if (sigma <= 0) return img;
  const auto k = gaussian_kernel(sigma);
  const long half = static_cast<long>(k.size() / 2);
  std::vector<double> tmp(img.size()), out(img.size());
  auto clampi = [](long v, long n) { return std::clamp(v, 0L, n - 1); };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (long i = -half; i <= half; ++i) s += k[i + half] * img[y * w + clampi(static_cast<long>(x) + i, w)];
      tmp[y * w + x] = s;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (long i = -half; i <= half; ++i) s += k[i + half] * tmp[clampi(static_cast<long>(y) + i, h) * w + x];
      out[y * w + x] = s;
    }
  return out;
}

struct PlannedStenosis {
  std::size_t branch, sample;
  double ratio;
};

/// Places stenoses at least 3 sigma plus a radius clear of branch ends,
/// junctions, other branches and each other. Returns false when they do not fit.
inline bool plan_stenoses(std::vector<PlannedStenosis>& out, PhantomRng& rng, const PhantomSpec& spec,
                          const std::vector<std::vector<CenterSample>>& branches) {
  out.clear();
  if (spec.stenosis_count == 0) return true;
  const double reach = 3.0 * spec.stenosis_sigma;
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const auto& br = branches[b];
    for (std::size_t i = 0; i < br.size(); ++i) {
      const double s = br[i].s, len = br.back().s;
      const double clear = reach + spec.radius_max;
      if (s < clear || len - s < clear) continue;
      bool ok = true;
      for (std::size_t o = 0; o < branches.size() && ok; ++o) {
        if (o == b) continue;
        for (const auto& q : branches[o]) {
          if (std::hypot(q.x - br[i].x, q.y - br[i].y) < clear + q.r) {
            ok = false;
            break;
          }
        }
      }
      if (ok) candidates.emplace_back(b, i);
    }
  }
  for (int k = 0; k < spec.stenosis_count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed && !candidates.empty(); ++attempt) {
      const auto [b, i] = candidates[rng.index(candidates.size())];
      const auto& c = branches[b][i];
      bool clear = true;
      for (const auto& p : out) {
        const auto& o = branches[p.branch][p.sample];
        if (std::hypot(o.x - c.x, o.y - c.y) < 2 * reach + 2 * spec.radius_max) clear = false;
      }
      if (!clear) continue;
      out.push_back({b, i, rng.uniform(spec.ratio_min, spec.ratio_max)});
      placed = true;
    }
    if (!placed) return false;
  }
  return true;
}

inline Image8 render_angiogram(PhantomRng& rng, const PhantomSpec& spec, const Image8& mask) {
  const std::size_t n = mask.height;
  std::vector<double> m(mask.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = mask.pixels[i];
  const auto soft = blur(m, n, n, spec.blur_sigma);
  const double gx = rng.uniform(-0.1, 0.1), gy = rng.uniform(-0.1, 0.1), base = rng.uniform(0.7, 0.8);
  Image8 img(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double u = static_cast<double>(x) / (n - 1) - 0.5, v = static_cast<double>(y) / (n - 1) - 0.5;
      double val = base + gx * u + gy * v - spec.contrast * soft[y * n + x] + spec.noise_sigma * rng.normal();
      val = std::clamp(val, 0.0, 1.0);
      img.at(y, x) = static_cast<std::uint8_t>(std::lround(val * 255.0));
    }
  return img;
}

inline std::vector<std::vector<CenterSample>> grow_tree(PhantomRng& rng, const PhantomSpec& spec) {
  const double E = spec.extent;
  const double margin = spec.radius_max + 1.0;
  std::vector<std::vector<CenterSample>> branches;
  // The root enters from one side and crosses most of the field.
  const int side = static_cast<int>(rng.index(4));
  const double along = rng.uniform(0.3, 0.7) * E;
  double x0 = 0, y0 = 0, th = 0;
  switch (side) {
    case 0: x0 = margin, y0 = along, th = 0; break;
    case 1: x0 = E - 1 - margin, y0 = along, th = M_PI; break;
    case 2: x0 = along, y0 = margin, th = M_PI / 2; break;
    default: x0 = along, y0 = E - 1 - margin, th = -M_PI / 2; break;
  }
  th += rng.uniform(-0.3, 0.3);
  const double r_root = rng.uniform(spec.radius_min, spec.radius_max);
  branches.push_back(grow_branch(rng, x0, y0, th, 1.2 * E, r_root, spec.taper, E, margin));

  std::vector<std::size_t> parents = {0};
  for (int gen = 2; gen <= spec.tree_depth; ++gen) {
    std::vector<std::size_t> next;
    for (std::size_t pb : parents) {
      const auto& par = branches[pb];
      if (par.size() < 20) continue;
      const std::size_t at = par.size() / 4 + rng.index(par.size() / 2);
      const auto& o = par[at];
      const double heading = std::atan2(par[at + 1].y - o.y, par[at + 1].x - o.x);
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double theta = heading + sign * rng.uniform(0.5, 1.0);
      const double r = std::max(spec.radius_min, o.r * rng.uniform(0.7, 0.9));
      auto child = grow_branch(rng, o.x, o.y, theta, 0.6 * E, r, spec.taper, E, margin);
      if (child.size() < 8) continue;
      branches.push_back(std::move(child));
      next.push_back(branches.size() - 1);
    }
    parents = std::move(next);
  }
  return branches;
}

}  // namespace detail

/// Deterministic phantom from `seed`. Trees are regrown (from the same
/// stream) until the requested stenoses fit; the spec is rejected after
/// repeated failures.
inline PhantomSample generate_phantom(std::uint64_t seed, const PhantomSpec& spec) {
  spec.validate();
  detail::PhantomRng rng(seed);
  constexpr int kAttempts = 50;
  std::vector<std::vector<CenterSample>> branches;
  std::vector<detail::PlannedStenosis> planned;
  bool ok = false;
  for (int attempt = 0; attempt < kAttempts && !ok; ++attempt) {
    branches = detail::grow_tree(rng, spec);
    ok = branches[0].size() >= 2 && detail::plan_stenoses(planned, rng, spec, branches);
  }
  if (!ok) {
    throw InfeasiblePhantomError("generate_phantom: cannot fit " + std::to_string(spec.stenosis_count) +
                                 " stenoses of sigma " + std::to_string(spec.stenosis_sigma) + " into an extent-" +
                                 std::to_string(spec.extent) + " tree");
  }

  PhantomSample out;
  out.seed = seed;
  for (const auto& p : planned) {
    auto& br = branches[p.branch];
    const double s0 = br[p.sample].s;
    for (auto& c : br) {
      const double t = (c.s - s0) / spec.stenosis_sigma;
      c.r *= 1.0 - p.ratio * std::exp(-0.5 * t * t);
    }
    const auto& c = br[p.sample];
    out.gt.push_back({std::lround(c.x), std::lround(c.y), 100.0 * p.ratio, static_cast<int>(p.branch)});
  }

  out.mask = Image8(static_cast<std::size_t>(spec.extent), static_cast<std::size_t>(spec.extent));
  for (const auto& br : branches)
    for (const auto& c : br) detail::render_disk(out.mask, c.x, c.y, c.r);
  out.image = detail::render_angiogram(rng, spec, out.mask);
  out.branches = std::move(branches);
  return out;
}

/// Single straight tube of constant radius crossing the field with one
/// stenosis of ratio `ratio` at its midpoint; no background structure.
inline PhantomSample analytic_tube_phantom(std::uint64_t seed, int extent, double radius, double ratio,
                                           double sigma = 3.0) {
  if (!(ratio > 0 && ratio < 1) || radius * (1 - ratio) < 0.75)
    throw InfeasiblePhantomError("analytic_tube_phantom: stenosis neck below 0.75 px");
  detail::PhantomRng rng(seed);
  const double E = extent, c = (E - 1) / 2.0;
  const double angle = rng.uniform(-0.4, 0.4) + (rng.uniform() < 0.5 ? 0.0 : M_PI / 2);
  const double half = 0.5 * E - radius - 4.0;
  std::vector<CenterSample> br;
  for (double s = -half; s <= half; s += detail::kStep) {
    const double t = s / sigma;
    br.push_back({c + s * std::cos(angle), c + s * std::sin(angle),
                  radius * (1.0 - ratio * std::exp(-0.5 * t * t)), s + half});
  }
  PhantomSample out;
  out.seed = seed;
  out.mask = Image8(static_cast<std::size_t>(extent), static_cast<std::size_t>(extent));
  for (const auto& p : br) detail::render_disk(out.mask, p.x, p.y, p.r);
  out.gt.push_back({std::lround(c), std::lround(c), 100.0 * ratio, 0});
  PhantomSpec spec;
  spec.extent = extent;
  out.image = detail::render_angiogram(rng, spec, out.mask);
  out.branches.push_back(std::move(br));
  return out;
}

}  // namespace fadnet
