#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fadnet/core/image.hpp"
#include "fadnet/metrics/segmentation.hpp"

namespace fadnet {

namespace detail {

// 8-neighbourhood in Zhang-Suen order P2..P9: N, NE, E, SE, S, SW, W, NW.
constexpr std::array<int, 8> kNy = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr std::array<int, 8> kNx = {0, 1, 1, 1, 0, -1, -1, -1};

inline std::array<int, 8> ring(const Image8& m, long y, long x) {
  std::array<int, 8> p{};
  for (int k = 0; k < 8; ++k) p[k] = m.on(y + kNy[k], x + kNx[k]) ? 1 : 0;
  return p;
}

/// Yokoi 8-connectivity number; a foreground pixel is simple (removable
/// without changing topology) iff this is 1.
inline int connectivity_8(const std::array<int, 8>& p) {
  // Yokoi indexes E, NE, N, NW, W, SW, S, SE; map from the N-first ring.
  const std::array<int, 8> q = {p[2], p[1], p[0], p[7], p[6], p[5], p[4], p[3]};
  int c = 0;
  for (int k = 0; k < 8; k += 2) {
    const int a = 1 - q[k], b = 1 - q[(k + 1) % 8], d = 1 - q[(k + 2) % 8];
    c += a - a * b * d;
  }
  return c;
}

inline int degree_of(const Image8& m, long y, long x) {
  const auto p = ring(m, y, x);
  return p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
}

}  // namespace detail

/// Zhang-Suen thinning to a fixpoint, followed by removal of the redundant
/// staircase corners it leaves (simple pixels with two or more neighbours,
/// in raster order), so every non-junction pixel has at most two neighbours.
inline Image8 skeletonize(const Image8& mask) {
  Image8 s = binarized(mask);
  const long H = static_cast<long>(s.height), W = static_cast<long>(s.width);
  std::vector<std::size_t> del;
  for (bool changed = true; changed;) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      del.clear();
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          if (!s.on(y, x)) continue;
          const auto p = detail::ring(s, y, x);
          const int b = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int k = 0; k < 8; ++k) a += (p[k] == 0 && p[(k + 1) % 8] == 1);
          if (a != 1) continue;
          const bool ok = pass == 0 ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                                    : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
          if (ok) del.push_back(static_cast<std::size_t>(y * W + x));
        }
      for (std::size_t i : del) s.pixels[i] = 0;
      changed = changed || !del.empty();
    }
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        if (!s.on(y, x)) continue;
        const auto p = detail::ring(s, y, x);
        const int deg = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
        if (deg >= 2 && detail::connectivity_8(p) == 1) {
          s.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 0;
          changed = true;
        }
      }
  }
  return s;
}

namespace detail {

/// Squared-distance lower envelope of parabolas (exact 1D transform).
inline void edt_1d(const double* f, std::size_t n, double* d, std::vector<long>& v, std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0);
  long k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (long q = 1; q < static_cast<long>(n); ++q) {
    double s;
    for (;;) {
      const long p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + static_cast<double>(q * q)) - (f[p] + static_cast<double>(p * p))) / (2.0 * static_cast<double>(q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k + 1)] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (long q = 0; q < static_cast<long>(n); ++q) {
    while (z[static_cast<std::size_t>(k + 1)] < static_cast<double>(q)) ++k;
    const long p = v[static_cast<std::size_t>(k)];
    d[q] = static_cast<double>((q - p) * (q - p)) + f[p];
  }
}

}  // namespace detail

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel; pixels outside the image count as background.
inline std::vector<double> distance_transform(const Image8& mask) {
  const std::size_t H = mask.height + 2, W = mask.width + 2;
  // Foreground values far exceed any squared distance inside the padded frame.
  const double inf = static_cast<double>(H * H + W * W) + 1.0;
  std::vector<double> f(H * W, 0.0);
  for (std::size_t y = 0; y < mask.height; ++y)
    for (std::size_t x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) f[(y + 1) * W + x + 1] = inf;
  std::vector<long> v;
  std::vector<double> z, col(H), dcol(H), row(W);
  for (std::size_t x = 0; x < W; ++x) {
    for (std::size_t y = 0; y < H; ++y) col[y] = f[y * W + x];
    detail::edt_1d(col.data(), H, dcol.data(), v, z);
    for (std::size_t y = 0; y < H; ++y) f[y * W + x] = dcol[y];
  }
  for (std::size_t y = 0; y < H; ++y) {
    detail::edt_1d(f.data() + y * W, W, row.data(), v, z);
    std::copy(row.begin(), row.end(), f.begin() + static_cast<long>(y * W));
  }
  std::vector<double> out(mask.size(), 0.0);
  for (std::size_t y = 0; y < mask.height; ++y)
    for (std::size_t x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) out[y * mask.width + x] = std::sqrt(f[(y + 1) * W + x + 1]);
  return out;
}

enum class NodeKind : std::uint8_t { none, isolated, endpoint, connector, bifurcation };

struct CenterlineSegment {
  int id = 0;
  std::vector<PixelPoint> pixels;  // ordered chain
  bool closed = false;             // cyclic loop of connectors
};

struct CenterlineGraph {
  Image8 skeleton;
  std::vector<NodeKind> kinds;  // per pixel
  std::vector<PixelPoint> endpoints, bifurcations;
  std::vector<CenterlineSegment> segments;

  NodeKind kind(long y, long x) const { return kinds[static_cast<std::size_t>(y) * skeleton.width + static_cast<std::size_t>(x)]; }
};

/// Labels skeleton pixels by 8-degree and traces chains between endpoints and
/// bifurcations. Bifurcation pixels belong to no segment; isolated pixels form
/// length-1 segments; remaining connector rings become closed segments.
inline CenterlineGraph decompose_segments(const Image8& skeleton) {
  CenterlineGraph g;
  g.skeleton = binarized(skeleton);
  const Image8& s = g.skeleton;
  const long H = static_cast<long>(s.height), W = static_cast<long>(s.width);
  g.kinds.assign(s.size(), NodeKind::none);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      if (!s.on(y, x)) continue;
      const int d = detail::degree_of(s, y, x);
      NodeKind k = d == 0 ? NodeKind::isolated : d == 1 ? NodeKind::endpoint : d == 2 ? NodeKind::connector : NodeKind::bifurcation;
      g.kinds[static_cast<std::size_t>(y * W + x)] = k;
      if (k == NodeKind::endpoint) g.endpoints.push_back({y, x});
      if (k == NodeKind::bifurcation) g.bifurcations.push_back({y, x});
    }

  std::vector<std::uint8_t> visited(s.size(), 0);
  auto idx = [W](long y, long x) { return static_cast<std::size_t>(y * W + x); };
  auto usable = [&](long y, long x) {
    return s.on(y, x) && !visited[idx(y, x)] && g.kind(y, x) != NodeKind::bifurcation;
  };
  // Edge-adjacent steps are preferred over diagonal ones.
  constexpr std::array<int, 8> order = {0, 2, 4, 6, 1, 3, 5, 7};

  auto trace = [&](long y, long x) {
    CenterlineSegment seg;
    seg.id = static_cast<int>(g.segments.size());
    for (;;) {
      visited[idx(y, x)] = 1;
      seg.pixels.push_back({y, x});
      if (seg.pixels.size() > 1 && g.kind(y, x) == NodeKind::endpoint) break;
      bool moved = false;
      for (int k : order) {
        const long ny = y + detail::kNy[k], nx = x + detail::kNx[k];
        if (usable(ny, nx)) {
          y = ny, x = nx;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    g.segments.push_back(std::move(seg));
  };

  for (const auto& p : g.endpoints)
    if (!visited[idx(p.row, p.col)]) trace(p.row, p.col);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      if (s.on(y, x) && g.kind(y, x) == NodeKind::isolated) {
        visited[idx(y, x)] = 1;
        g.segments.push_back({static_cast<int>(g.segments.size()), {{y, x}}, false});
      }
  for (const auto& b : g.bifurcations)
    for (int k : order) {
      const long ny = b.row + detail::kNy[k], nx = b.col + detail::kNx[k];
      if (usable(ny, nx)) trace(ny, nx);
    }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      if (usable(y, x)) {
        trace(y, x);
        g.segments.back().closed = true;
      }
  return g;
}

}  // namespace fadnet
