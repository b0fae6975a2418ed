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
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "drawering/drawering.hpp"

using namespace drawering;

namespace {

std::vector<double> iota_targets(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 1.0);
  return v;
}

/// Linear-scan oracle for assign_disjoint: first interval whose upper
/// boundary is >= y, else the last drawer.
int assign_brute(const drawer_set& ds, double y) {
  for (std::size_t i = 0; i < ds.boundaries.size(); ++i) {
    if (y <= ds.boundaries[i]) return static_cast<int>(i);
  }
  return static_cast<int>(ds.boundaries.size());
}

}  // namespace

TEST_CASE("quantile matches the sort-and-index oracle", "[drawers]") {
  const auto t8 = iota_targets(8);
  REQUIRE(quantile_sorted(t8, 1, 2) == 4.0);
  const auto t64 = iota_targets(64);
  REQUIRE(quantile_sorted(t64, 3, 4) == 48.0);
  // Index oracle on a non-divisible grid: ceil(i*N/n)-1.
  const auto t10 = iota_targets(10);
  for (int i = 1; i < 3; ++i) {
    const auto idx = static_cast<std::size_t>(std::ceil(i * 10.0 / 3.0)) - 1;
    REQUIRE(quantile_sorted(t10, i, 3) == t10[idx]);
  }
  const std::vector<double> constant(20, 7.5);
  for (int i = 1; i < 5; ++i) REQUIRE(quantile_sorted(constant, i, 5) == 7.5);
}

TEST_CASE("quantile rejects out-of-range orders and empty samples", "[drawers]") {
  const auto t = iota_targets(8);
  REQUIRE_THROWS_AS(quantile_sorted(t, 0, 2), config_error);
  REQUIRE_THROWS_AS(quantile_sorted(t, 2, 2), config_error);
  REQUIRE_THROWS_AS(quantile_sorted(t, 3, 2), config_error);
  REQUIRE_THROWS_AS(quantile_sorted(t, -1, 2), config_error);
  REQUIRE_THROWS_AS(quantile_sorted(std::vector<double>{}, 1, 2), config_error);
}

TEST_CASE("regular drawers split 1..8 into (4,4)", "[drawers]") {
  const auto t = iota_targets(8);
  const auto ds = build_regular(t, 2);
  REQUIRE(ds.kind == drawer_kind::regular);
  REQUIRE(ds.boundaries == std::vector<double>{4.0});
  const auto rep = validate_occupancy(ds, t, 0);
  REQUIRE(rep.counts == std::vector<std::size_t>{4, 4});
}

TEST_CASE("regular drawers on 100 distinct values give (25,25,25,25)", "[drawers]") {
  auto rng = rng_stream::derived(17, "reg100");
  std::vector<double> t(100);
  for (auto& v : t) v = rng.uniform(-50.0, 50.0);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  REQUIRE(t.size() == 100);  // collisions are measure-zero; regenerate seed if ever hit
  const auto ds = build_regular(t, 4);
  REQUIRE(ds.drawer_count() == 4);
  const auto rep = validate_occupancy(ds, t, 0);
  REQUIRE(rep.counts == std::vector<std::size_t>{25, 25, 25, 25});
}

TEST_CASE("regular drawers: n=1 is the single drawer over all reals", "[drawers]") {
  const auto ds = build_regular(iota_targets(5), 1);
  REQUIRE(ds.boundaries.empty());
  REQUIRE(ds.drawer_count() == 1);
  REQUIRE(assign_disjoint(ds, -1e300) == 0);
  REQUIRE(assign_disjoint(ds, 1e300) == 0);
}

TEST_CASE("regular drawers stay balanced within one on distinct targets", "[drawers]") {
  auto rng = rng_stream::derived(18, "bal");
  for (const auto [N, n] : {std::pair{97, 5}, {1000, 7}, {64, 64}}) {
    std::vector<double> t(static_cast<std::size_t>(N));
    for (auto& v : t) v = rng.uniform(-1000.0, 1000.0);
    const auto ds = build_regular(t, n);
    const auto rep = validate_occupancy(ds, t, 0);
    const auto lo = static_cast<std::size_t>(N / n);
    const auto hi = static_cast<std::size_t>((N + n - 1) / n);
    for (auto c : rep.counts) {
      REQUIRE(c + 1 >= lo);
      REQUIRE(c <= hi + 1);
    }
    const auto sum = std::accumulate(rep.counts.begin(), rep.counts.end(), std::size_t{0});
    REQUIRE(sum == static_cast<std::size_t>(N));
  }
}

TEST_CASE("regular drawers collapse on degenerate targets", "[drawers]") {
  const std::vector<double> constant(50, 3.0);
  REQUIRE_THROWS_AS(build_regular(constant, 4), config_error);
  REQUIRE_THROWS_AS(build_regular(std::vector<double>{}, 2), config_error);
  REQUIRE_THROWS_AS(build_regular(iota_targets(8), 0), config_error);
  const std::vector<double> nonfinite{1.0, std::nan("")};
  REQUIRE_THROWS_AS(build_regular(nonfinite, 2), config_error);
  // Heavy ties shrink m but survive while at least 2 drawers remain.
  std::vector<double> ties(90, 1.0);
  ties.resize(100, 2.0);
  const auto ds = build_regular(ties, 10);
  REQUIRE(ds.drawer_count() >= 2);
  REQUIRE(std::is_sorted(ds.boundaries.begin(), ds.boundaries.end()));
}

TEST_CASE("uneven drawers reproduce the worked 1..64 example", "[drawers]") {
  const auto t = iota_targets(64);
  const auto ds = build_uneven(t, 3);
  REQUIRE(ds.kind == drawer_kind::uneven);
  REQUIRE(ds.boundaries == std::vector<double>{8.0, 16.0, 32.0, 48.0, 56.0});
  const auto rep = validate_occupancy(ds, t, 0);
  REQUIRE(rep.counts == std::vector<std::size_t>{8, 8, 16, 16, 8, 8});
}

TEST_CASE("uneven drawer occupancy roughly doubles toward the median", "[drawers]") {
  auto rng = rng_stream::derived(19, "uneven");
  const int N = 6000;
  const int n = 4;
  std::vector<double> t(static_cast<std::size_t>(N));
  for (auto& v : t) v = rng.normal() * 3.0 + rng.uniform(-1.0, 1.0);
  const auto ds = build_uneven(t, n);
  REQUIRE(ds.drawer_count() == 2 * n);
  const auto rep = validate_occupancy(ds, t, 0);

  // Before tail extension e_1 starts at q(1, 2^(n+1)): brute-force that
  // count separately, then take e_2..e_n straight from the report.
  std::vector<double> sorted = t;
  std::sort(sorted.begin(), sorted.end());
  const double e1_lo = quantile_sorted(sorted, 1, std::int64_t{1} << (n + 1));
  std::vector<double> pre(static_cast<std::size_t>(n));
  pre[0] = static_cast<double>(std::count_if(t.begin(), t.end(), [&](double y) {
    return y > e1_lo && y <= ds.boundaries[0];
  }));
  for (int i = 2; i <= n; ++i) pre[static_cast<std::size_t>(i - 1)] = static_cast<double>(rep.counts[static_cast<std::size_t>(i - 1)]);
  for (int i = 0; i + 1 < n; ++i) {
    const double ratio = pre[static_cast<std::size_t>(i + 1)] / pre[static_cast<std::size_t>(i)];
    INFO("i=" << i << " ratio=" << ratio);
    REQUIRE(ratio >= 1.5);
    REQUIRE(ratio <= 2.5);
  }

  // The two central drawers each hold at most a quarter of the sample.
  REQUIRE(rep.counts[static_cast<std::size_t>(n - 1)] <= static_cast<std::size_t>(0.25 * N + 1));
  REQUIRE(rep.counts[static_cast<std::size_t>(n)] <= static_cast<std::size_t>(0.25 * N + 1));
  // Counts partition the sample and drawers mirror around the median.
  const auto sum = std::accumulate(rep.counts.begin(), rep.counts.end(), std::size_t{0});
  REQUIRE(sum == static_cast<std::size_t>(N));
}

TEST_CASE("uneven drawers reject bad n and degenerate targets", "[drawers]") {
  const auto t = iota_targets(64);
  REQUIRE_THROWS_AS(build_uneven(t, 1), config_error);
  REQUIRE_THROWS_AS(build_uneven(t, 0), config_error);
  REQUIRE_THROWS_AS(build_uneven(t, 31), config_error);
  const std::vector<double> constant(64, 2.0);
  REQUIRE_THROWS_AS(build_uneven(constant, 3), config_error);
}

TEST_CASE("assign_disjoint respects half-open (lo, hi] intervals", "[drawers]") {
  drawer_set ds;
  ds.boundaries = {4.0};
  REQUIRE(assign_disjoint(ds, 4.0) == 0);
  REQUIRE(assign_disjoint(ds, 4.5) == 1);
  REQUIRE(assign_disjoint(ds, -1e308) == 0);
  REQUIRE(assign_disjoint(ds, 1e308) == 1);
}

TEST_CASE("assign_disjoint equals the linear-scan oracle on 1e5 reals", "[drawers]") {
  auto rng = rng_stream::derived(20, "scan");
  drawer_set ds;
  ds.boundaries = {-3.0, -1.5, 0.0, 0.25, 2.0, 9.0};
  for (int k = 0; k < 100000; ++k) {
    const double y = rng.uniform(-12.0, 12.0);
    REQUIRE(assign_disjoint(ds, y) == assign_brute(ds, y));
  }
  // Boundary points land in the lower drawer of each adjacent pair.
  for (std::size_t i = 0; i < ds.boundaries.size(); ++i) {
    REQUIRE(assign_disjoint(ds, ds.boundaries[i]) == static_cast<int>(i));
  }
}

TEST_CASE("assign_disjoint preserves order", "[drawers]") {
  auto rng = rng_stream::derived(21, "order");
  const auto t = iota_targets(512);
  const auto ds = build_uneven(t, 3);
  double prev_y = -1e9;
  int prev_idx = 0;
  std::vector<double> ys(2000);
  for (auto& y : ys) y = rng.uniform(-10.0, 600.0);
  std::sort(ys.begin(), ys.end());
  for (double y : ys) {
    const int idx = assign_disjoint(ds, y);
    REQUIRE(idx >= prev_idx);
    REQUIRE(y >= prev_y);
    prev_idx = idx;
    prev_y = y;
  }
}

TEST_CASE("assign_nested expands f_j membership", "[drawers]") {
  drawer_set ds;
  ds.boundaries = {1.0, 2.0, 3.0};  // m = 4
  ds.mode = drawer_mode::nested;
  REQUIRE(ds.label_width() == 3);
  REQUIRE(assign_nested(ds, 2.5) == std::vector<std::uint8_t>{1, 1, 0});  // index 2
  REQUIRE(assign_nested(ds, 0.0) == std::vector<std::uint8_t>{0, 0, 0});  // lowest drawer
  REQUIRE(assign_nested(ds, 9.0) == std::vector<std::uint8_t>{1, 1, 1});  // highest drawer
}

TEST_CASE("nested labels are monotone prefixes counting the disjoint index", "[drawers]") {
  auto rng = rng_stream::derived(22, "nest");
  const auto t = iota_targets(256);
  auto ds = build_uneven(t, 3);
  ds.mode = drawer_mode::nested;
  for (int k = 0; k < 5000; ++k) {
    const double y = rng.uniform(-20.0, 300.0);
    const auto bits = assign_nested(ds, y);
    REQUIRE(static_cast<int>(bits.size()) == ds.drawer_count() - 1);
    int ones = 0;
    bool seen_zero = false;
    for (auto b : bits) {
      if (b == 1) {
        REQUIRE_FALSE(seen_zero);  // prefix property
        ++ones;
      } else {
        seen_zero = true;
      }
    }
    REQUIRE(ones == assign_disjoint(ds, y));
  }
}

TEST_CASE("assign_nested requires at least two drawers", "[drawers]") {
  const auto ds = build_regular(iota_targets(8), 1);
  REQUIRE_THROWS_AS(assign_nested(ds, 1.0), config_error);
}

TEST_CASE("occupancy report counts and flags per drawer", "[drawers]") {
  auto rng = rng_stream::derived(23, "occ");
  std::vector<double> big(8000);
  for (auto& v : big) v = rng.uniform(0.0, 1.0);
  const auto ds8 = build_regular(big, 8);
  const auto rep8 = validate_occupancy(ds8, big);  // default min_count 500
  REQUIRE(rep8.pass);
  REQUIRE(rep8.flagged.empty());
  for (auto c : rep8.counts) REQUIRE(std::llabs(static_cast<long long>(c) - 1000) <= 1);

  std::vector<double> small(600);
  for (auto& v : small) v = rng.uniform(0.0, 1.0);
  const auto ds4 = build_regular(small, 4);
  const auto rep4 = validate_occupancy(ds4, small);
  REQUIRE_FALSE(rep4.pass);
  REQUIRE(rep4.flagged == std::vector<int>{0, 1, 2, 3});
  for (auto c : rep4.counts) REQUIRE(std::llabs(static_cast<long long>(c) - 150) <= 1);

  const auto rep0 = validate_occupancy(ds4, small, 0);
  REQUIRE(rep0.pass);
}

TEST_CASE("drawer sets round-trip through JSON", "[drawers]") {
  auto ds = build_uneven(iota_targets(64), 3, drawer_mode::nested);
  const auto j = to_json(ds);
  REQUIRE(j.at("kind") == "uneven");
  REQUIRE(j.at("mode") == "nested");
  const auto back = drawer_set_from_json(nlohmann::json::parse(j.dump()));
  REQUIRE(back.kind == ds.kind);
  REQUIRE(back.mode == ds.mode);
  REQUIRE(back.boundaries == ds.boundaries);
}

TEST_CASE("drawer set JSON parsing validates its fields", "[drawers]") {
  using nlohmann::json;
  REQUIRE_THROWS_AS(drawer_set_from_json(json::parse(R"({"kind":"regular","mode":"disjoint"})")), config_error);
  REQUIRE_THROWS_AS(
      drawer_set_from_json(json::parse(R"({"kind":"fancy","mode":"disjoint","boundaries":[1]})")),
      config_error);
  REQUIRE_THROWS_AS(
      drawer_set_from_json(json::parse(R"({"kind":"regular","mode":"disjoint","boundaries":[2,1]})")),
      config_error);
  REQUIRE_THROWS_AS(
      drawer_set_from_json(json::parse(R"({"kind":"regular","mode":"disjoint","boundaries":[1,1,2]})")),
      config_error);
}
