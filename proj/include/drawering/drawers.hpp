/*
 * Copyright 2026 The Drawering Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drawering/common.hpp"

namespace drawering {

enum class drawer_kind { regular, uneven };
enum class drawer_mode { disjoint, nested };

inline const char* to_string(drawer_kind k) { return k == drawer_kind::regular ? "regular" : "uneven"; }
inline const char* to_string(drawer_mode m) { return m == drawer_mode::disjoint ? "disjoint" : "nested"; }

inline drawer_kind drawer_kind_from_string(const std::string& s) {
  if (s == "regular") return drawer_kind::regular;
  if (s == "uneven") return drawer_kind::uneven;
  throw config_error("unknown drawer kind '" + s + "'");
}

inline drawer_mode drawer_mode_from_string(const std::string& s) {
  if (s == "disjoint") return drawer_mode::disjoint;
  if (s == "nested") return drawer_mode::nested;
  throw config_error("unknown drawer mode '" + s + "'");
}

/// An ordered partition of the reals into m = boundaries.size()+1 left-open
/// intervals: (-inf, b_1], (b_1, b_2], ..., (b_{m-1}, +inf).
struct drawer_set {
  std::vector<double> boundaries;  // strictly increasing
  drawer_kind kind = drawer_kind::regular;
  drawer_mode mode = drawer_mode::disjoint;

  int drawer_count() const { return static_cast<int>(boundaries.size()) + 1; }
  /// Width of the classification target this set induces.
  int label_width() const {
    return mode == drawer_mode::disjoint ? drawer_count() : drawer_count() - 1;
  }
};

/// Lower empirical i/n-quantile of an ascending-sorted sample: the element
/// at 0-based index ceil(i*N/n) - 1. Exact on integer grids.
inline double quantile_sorted(std::span<const double> sorted, std::int64_t i, std::int64_t n) {
  if (sorted.empty()) throw config_error("quantile: empty sample");
  if (i <= 0 || i >= n) {
    throw config_error("quantile: need 0 < i < n, got i=" + std::to_string(i) + ", n=" + std::to_string(n));
  }
  const auto N = static_cast<std::int64_t>(sorted.size());
  const std::int64_t idx = (i * N + n - 1) / n - 1;  // ceil(i*N/n) - 1
  return sorted[static_cast<std::size_t>(std::clamp<std::int64_t>(idx, 0, N - 1))];
}

namespace detail {

inline std::vector<double> sorted_copy(std::span<const double> targets) {
  if (targets.empty()) throw config_error("drawers: empty target sample");
  std::vector<double> s(targets.begin(), targets.end());
  std::sort(s.begin(), s.end());
  if (!std::isfinite(s.front()) || !std::isfinite(s.back())) {
    throw config_error("drawers: targets contain non-finite values");
  }
  return s;
}

// Equal adjacent quantiles (heavy ties) merge into one boundary. A
// boundary at the sample maximum splits nothing — the drawer above it
// would be empty on the training sample — so it collapses too. Errors
// only if fewer than two drawers survive.
inline std::vector<double> dedupe_boundaries(std::vector<double> b, double sample_max,
                                             const char* what) {
  b.erase(std::unique(b.begin(), b.end()), b.end());
  while (!b.empty() && b.back() >= sample_max) b.pop_back();
  if (b.empty()) {
    throw config_error(std::string(what) +
                       ": target distribution too degenerate, fewer than 2 drawers remain");
  }
  return b;
}

}  // namespace detail

/// n equal-occupancy drawers: e_i = (q_{i-1,n}, q_{i,n}] with the outer
/// bounds at -inf/+inf.
inline drawer_set build_regular(std::span<const double> targets, int n,
                                drawer_mode mode = drawer_mode::disjoint) {
  if (n < 1) throw config_error("build_regular: need n >= 1");
  const auto sorted = detail::sorted_copy(targets);
  drawer_set ds;
  ds.kind = drawer_kind::regular;
  ds.mode = mode;
  if (n == 1) return ds;  // single drawer covering all reals
  std::vector<double> b;
  b.reserve(n - 1);
  for (int i = 1; i < n; ++i) b.push_back(quantile_sorted(sorted, i, n));
  ds.boundaries = detail::dedupe_boundaries(std::move(b), sorted.back(), "build_regular");
  return ds;
}

/// 2n drawers whose occupancy roughly doubles toward the median:
///   e_i = (q_{1,2^(n-i+2)}, q_{2,2^(n-i+2)}]              for i <= n,
///   e_i = (q_{2^(i-n+1)-2,2^(i-n+1)}, q_{2^(i-n+1)-1,2^(i-n+1)}]  for i > n.
/// As written the outermost bounds leave the tails uncovered; e_1's lower
/// bound and e_2n's upper bound are extended to -inf/+inf so the set
/// partitions all reals.
inline drawer_set build_uneven(std::span<const double> targets, int n,
                               drawer_mode mode = drawer_mode::disjoint) {
  if (n < 2) throw config_error("build_uneven: need n >= 2");
  // The quantile grid is 2^(n+2)-fine; n beyond 30 overflows the index
  // math and could never satisfy any occupancy requirement anyway.
  if (n > 30) throw config_error("build_uneven: n too large");
  const auto sorted = detail::sorted_copy(targets);
  drawer_set ds;
  ds.kind = drawer_kind::uneven;
  ds.mode = mode;
  // Adjacent drawers share endpoints, so the upper bounds of e_1..e_{2n-1}
  // enumerate every interior boundary.
  std::vector<double> b;
  b.reserve(2 * n - 1);
  for (int i = 1; i <= n; ++i) {
    const std::int64_t den = std::int64_t{1} << (n - i + 2);
    b.push_back(quantile_sorted(sorted, 2, den));
  }
  for (int i = n + 1; i <= 2 * n - 1; ++i) {
    const std::int64_t den = std::int64_t{1} << (i - n + 1);
    b.push_back(quantile_sorted(sorted, den - 1, den));
  }
  ds.boundaries = detail::dedupe_boundaries(std::move(b), sorted.back(), "build_uneven");
  return ds;
}

/// 0-based index of the drawer containing y. Total over the reals.
inline int assign_disjoint(const drawer_set& ds, double y) {
  const auto it = std::lower_bound(ds.boundaries.begin(), ds.boundaries.end(), y);
  return static_cast<int>(it - ds.boundaries.begin());
}

/// Cumulative-membership label: bit j-1 answers "is y above boundary j?",
/// i.e. whether y lies in f_j = union of e_j..e_m for j = 2..m. The always
/// true f_1 is dropped, so the vector has m-1 components and is a prefix
/// of ones followed by zeros.
inline std::vector<std::uint8_t> assign_nested(const drawer_set& ds, double y) {
  const int m = ds.drawer_count();
  if (m < 2) throw config_error("assign_nested: need at least 2 drawers");
  const int idx = assign_disjoint(ds, y);
  std::vector<std::uint8_t> bits(m - 1, 0);
  for (int c = 0; c < idx; ++c) bits[c] = 1;
  return bits;
}

struct occupancy_report {
  std::vector<std::size_t> counts;  // per drawer, sums to the sample size
  int min_count = 0;
  std::vector<int> flagged;  // drawers below min_count
  bool pass = true;
};

/// Counts training targets per drawer and flags drawers whose occupancy
/// falls below min_count (the paper trained with at least 500 per drawer).
inline occupancy_report validate_occupancy(const drawer_set& ds, std::span<const double> targets,
                                           int min_count = 500) {
  occupancy_report rep;
  rep.min_count = min_count;
  rep.counts.assign(ds.drawer_count(), 0);
  for (double y : targets) rep.counts[assign_disjoint(ds, y)]++;
  for (int i = 0; i < ds.drawer_count(); ++i) {
    if (rep.counts[i] < static_cast<std::size_t>(min_count)) rep.flagged.push_back(i);
  }
  rep.pass = rep.flagged.empty();
  return rep;
}

inline nlohmann::ordered_json to_json(const drawer_set& ds) {
  return nlohmann::ordered_json{
      {"kind", to_string(ds.kind)}, {"mode", to_string(ds.mode)}, {"boundaries", ds.boundaries}};
}

inline drawer_set drawer_set_from_json(const nlohmann::json& j) {
  drawer_set ds;
  try {
    ds.kind = drawer_kind_from_string(j.at("kind").get<std::string>());
    ds.mode = drawer_mode_from_string(j.at("mode").get<std::string>());
    ds.boundaries = j.at("boundaries").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("drawer_set: bad JSON: ") + e.what());
  }
  if (!std::is_sorted(ds.boundaries.begin(), ds.boundaries.end()) ||
      std::adjacent_find(ds.boundaries.begin(), ds.boundaries.end()) != ds.boundaries.end()) {
    throw config_error("drawer_set: boundaries must be strictly increasing");
  }
  return ds;
}

}  // namespace drawering
