#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fadnet/model/fadnet.hpp"

namespace fadnet {

struct BenchRow {
  std::size_t side = 0;
  std::size_t n_pixels = 0;
  double t_freq_ms = 0;
  double t_dot_ms = 0;
};

/// Explicit softmax-free token attention on one channel: every pixel is a
/// token with scalar q, k, v, the N x N score row s_ij = q_i k_j is formed
/// explicitly and out_i = sum_j s_ij v_j.
inline std::vector<double> dot_product_attention(const std::vector<double>& q, const std::vector<double>& k,
                                                 const std::vector<double>& v) {
  const std::size_t n = q.size();
  std::vector<double> out(n), row(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double qi = q[i];
    for (std::size_t j = 0; j < n; ++j) row[j] = qi * k[j];
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8)
      for (int l = 0; l < 8; ++l) acc[l] += row[j + l] * v[j + l];
    for (; j < n; ++j) acc[0] += row[j] * v[j];
    out[i] = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  }
  return out;
}

namespace detail {

template <typename F>
double median_ms(F&& fn, int reps, double min_ms = 20.0) {
  std::vector<double> t;
  for (int r = 0; r < reps; ++r) {
    // Short calls are repeated until the timed block is long enough to resolve.
    int inner = 0;
    const auto t0 = std::chrono::steady_clock::now();
    double el = 0;
    do {
      fn();
      ++inner;
      el = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    } while (el < min_ms);
    t.push_back(el / inner);
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace detail

/// Median wall times of the frequency-split correlation and of explicit dot
/// attention on one (1,1,s,s) channel per side length. Inputs are seeded.
inline std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& sides, int reps, std::uint64_t seed = 7) {
  if (reps < 1) throw std::invalid_argument("bench_attention: reps must be >= 1");
  std::vector<BenchRow> rows;
  for (std::size_t s : sides) {
    if (!is_power_of_two(s)) throw std::invalid_argument("bench_attention: size " + std::to_string(s) + " is not a power of two");
    std::mt19937_64 gen(seed ^ s);
    auto uni = [&] { return static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5; };
    Tensor4<double> q(1, 1, s, s), k(1, 1, s, s), v(1, 1, s, s);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = uni(), k[i] = uni(), v[i] = uni();
    const BandMasks masks = radial_band_masks(s, s, 0.5);
    volatile double sink = 0;
    BenchRow row;
    row.side = s;
    row.n_pixels = s * s;
    row.t_freq_ms = detail::median_ms([&] { sink = sink + frequency_split_correlation(q, k, masks).att[0]; }, reps);
    row.t_dot_ms = detail::median_ms([&] { sink = sink + dot_product_attention(q.vec(), k.vec(), v.vec())[0]; }, reps);
    rows.push_back(row);
  }
  return rows;
}

/// Least-squares slope of log(t) against log(n_pixels).
inline double loglog_slope(const std::vector<BenchRow>& rows, bool freq) {
  if (rows.size() < 2) throw std::invalid_argument("loglog_slope: need at least two sizes");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double x = std::log(static_cast<double>(r.n_pixels)), y = std::log(freq ? r.t_freq_ms : r.t_dot_ms);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "n_pixels,t_freq_ms,t_dot_ms\n";
  os.precision(6);
  for (const auto& r : rows) os << r.n_pixels << ',' << std::fixed << r.t_freq_ms << ',' << r.t_dot_ms << '\n';
  return os.str();
}

}  // namespace fadnet
