#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "pisces/core.hpp"

namespace pisces {

struct DbscanResult {
  std::vector<std::vector<std::size_t>> clusters;  // ordered by smallest member value
  std::vector<std::size_t> outliers;               // ascending index
};

/// DBSCAN on the real line with |x - y| <= eps neighbourhoods (a point counts
/// itself towards min_pts).
///
/// In one dimension density-connected core points form runs in sorted order
/// whose consecutive gaps are <= eps, so clustering reduces to a sweep. A
/// border point within reach of two clusters joins the one owning its nearest
/// core point (lower value on a tie), which keeps the result independent of
/// input order.
inline DbscanResult dbscan_1d(std::span<const double> points, double eps, std::size_t min_pts) {
  if (points.empty()) throw Error(Errc::EmptyInput, "dbscan_1d");
  if (!(eps > 0.0)) throw Error(Errc::InvalidParams, "dbscan_1d: eps must be > 0");
  if (min_pts < 1) throw Error(Errc::InvalidParams, "dbscan_1d: min_pts must be >= 1");
  if (!all_finite(points)) throw Error(Errc::NonFiniteInput, "dbscan_1d");

  const std::size_t n = points.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });

  std::vector<double> v(n);
  for (std::size_t r = 0; r < n; ++r) v[r] = points[order[r]];

  // Neighbourhood sizes with two pointers over the sorted values.
  std::vector<bool> core(n, false);
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (std::size_t r = 0; r < n; ++r) {
    while (v[r] - v[lo] > eps) ++lo;
    if (hi < r) hi = r;
    while (hi + 1 < n && v[hi + 1] - v[r] <= eps) ++hi;
    core[r] = (hi - lo + 1) >= min_pts;
  }

  // Label runs of core points.
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(n, kNone);
  std::size_t n_clusters = 0;
  std::size_t prev_core = kNone;
  for (std::size_t r = 0; r < n; ++r) {
    if (!core[r]) continue;
    if (prev_core == kNone || v[r] - v[prev_core] > eps) ++n_clusters;
    label[r] = n_clusters - 1;
    prev_core = r;
  }

  // Border points: attach to the nearest core within eps.
  std::vector<std::size_t> prev_core_of(n, kNone);
  std::vector<std::size_t> next_core_of(n, kNone);
  for (std::size_t r = 0, last = kNone; r < n; ++r) {
    if (core[r]) last = r;
    prev_core_of[r] = last;
  }
  for (std::size_t r = n, last = kNone; r-- > 0;) {
    if (core[r]) last = r;
    next_core_of[r] = last;
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (core[r]) continue;
    const std::size_t p = prev_core_of[r];
    const std::size_t q = next_core_of[r];
    const double dp = p == kNone ? INFINITY : v[r] - v[p];
    const double dq = q == kNone ? INFINITY : v[q] - v[r];
    if (dp <= eps && dp <= dq) {
      label[r] = label[p];
    } else if (dq <= eps) {
      label[r] = label[q];
    }
  }

  DbscanResult out;
  out.clusters.resize(n_clusters);
  for (std::size_t r = 0; r < n; ++r) {
    if (label[r] == kNone) {
      out.outliers.push_back(order[r]);
    } else {
      out.clusters[label[r]].push_back(order[r]);
    }
  }
  for (auto& c : out.clusters) std::sort(c.begin(), c.end());
  std::sort(out.outliers.begin(), out.outliers.end());
  return out;
}

}  // namespace pisces
