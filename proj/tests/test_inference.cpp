/*
 * Copyright 2026 The pairexp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <map>
#include <random>

#include "catch_amalgamated.hpp"
#include "pairexp/inference.hpp"
#include "support.hpp"

using namespace pairexp;
using namespace testing_support;

namespace {

// Brute-force p+ and p- at tau for a statistic of the sign-flipped adjusted
// differences, enumerating all 2^P assignments with equal weight.
template <class Stat>
std::pair<double, double> brute_p(const std::vector<double>& d, double tau, Stat stat) {
  const std::size_t P = d.size();
  std::vector<double> x(P);
  for (std::size_t i = 0; i < P; ++i) x[i] = d[i] - tau;
  const double obs = stat(x, tau);
  std::size_t ge = 0, le = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << P); ++mask) {
    std::vector<double> y(P);
    for (std::size_t i = 0; i < P; ++i) y[i] = ((mask >> i) & 1 ? -1.0 : 1.0) * std::fabs(x[i]);
    const double s = stat(y, tau);
    const double tol = std::isinf(obs) ? 0.0 : 1e-9 * (1 + std::fabs(obs));
    ge += s >= obs - tol;
    le += s <= obs + tol;
  }
  const double n = double(std::size_t{1} << P);
  return {ge / n, le / n};
}

double mean_stat(const std::vector<double>& y, double tau) {
  double s = 0;
  for (double v : y) s += v;
  return tau + s / double(y.size());
}

double t_stat(const std::vector<double>& y, double) {
  const double P = double(y.size());
  double m = 0, ss = 0;
  for (double v : y) m += v;
  m /= P;
  for (double v : y) ss += (v - m) * (v - m);
  const double se = std::sqrt(ss / (P - 1) / P);
  if (se < 1e-12) return m == 0 ? 0.0 : std::copysign(INFINITY, m);
  return m / se;
}

// Hand ranking: average ranks of |y| after dropping exact zeros.
double signed_rank_stat(const std::vector<double>& y, double) {
  std::vector<double> mag;
  for (double v : y)
    if (std::fabs(v) > 1e-12) mag.push_back(std::fabs(v));
  double w = 0;
  for (double v : y) {
    if (!(v > 1e-12)) continue;
    double below = 0, equal = 0;
    for (double m : mag) {
      below += m < std::fabs(v) - 1e-12;
      equal += std::fabs(m - std::fabs(v)) <= 1e-12;
    }
    w += below + (equal + 1) / 2.0;
  }
  return w;
}

RandomizationSettings mc(std::uint64_t seed, std::size_t draws = 10000) {
  RandomizationSettings rs;
  rs.draws = draws;
  rs.exact_max_pairs = 0;
  rs.seed = seed;
  return rs;
}

RandomizationSettings exact() {
  RandomizationSettings rs;
  rs.exact_max_pairs = 20;
  return rs;
}

std::vector<double> normal_draws(std::size_t n, double mu, double sd, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> g(mu, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = std::round(g(eng) * 100) / 100;
  return v;
}

}  // namespace

TEST_CASE("pair differences subtract control from treated", "[inference]") {
  TimeSeriesDataset ds(Granularity::hourly, hourly_stamps(4),
                       {numeric("no2", ColumnRole::outcome, std::vector<std::optional<double>>{10, 8, 12, 11})});
  MatchedPairSet set;
  set.pairs = {{0, 1}, {2, 3}};
  auto s = pair_differences(ds, set, "no2", 0);
  CHECK(s.d == std::vector<double>{2, 1});
  auto lead = pair_differences_allow_empty(ds, set, "no2", 1);
  CHECK(lead.d == std::vector<double>{-4});  // (8 - 12); pair 2 runs off the end
  CHECK(lead.excluded == 1);
  CHECK_THROWS_AS(pair_differences(ds, set, "no2", 5), DataError);
}

TEST_CASE("point estimate", "[inference]") {
  CHECK(point_estimate(std::vector<double>{2, 2, 2}) == 2.0);
  CHECK(point_estimate(std::vector<double>{0, 2}) == 1.0);
  CHECK_THROWS_AS(point_estimate(std::vector<double>{}), ParameterError);
}

TEST_CASE("Neyman interval", "[inference][neyman]") {
  auto a = neyman(std::vector<double>{1, 1, 1});
  CHECK(a.variance == 0.0);
  CHECK(a.lower == 1.0);
  CHECK(a.upper == 1.0);
  auto b = neyman(std::vector<double>{0, 2});
  CHECK(b.estimate == 1.0);
  CHECK(b.variance == Catch::Approx(1.0));
  CHECK(b.lower == Catch::Approx(-0.96));
  CHECK(b.upper == Catch::Approx(2.96));
  CHECK_THROWS_AS(neyman(std::vector<double>{3}), ParameterError);
  // General alpha uses the exact quantile.
  CHECK(neyman(std::vector<double>{0, 2}, 0.1).z == Catch::Approx(1.6448536).epsilon(1e-6));
}

TEST_CASE("Neyman interval shifts with the data", "[inference][neyman][property]") {
  auto d = normal_draws(40, 3, 4, 1);
  auto base = neyman(d);
  for (double c : {-7.5, 0.25, 12.0}) {
    std::vector<double> e(d);
    for (auto& x : e) x += c;
    auto r = neyman(e);
    CHECK(r.estimate == Catch::Approx(base.estimate + c).margin(1e-12));
    CHECK(r.lower == Catch::Approx(base.lower + c).margin(1e-9));
    CHECK(r.upper == Catch::Approx(base.upper + c).margin(1e-9));
    CHECK(r.variance == Catch::Approx(base.variance).epsilon(1e-9));
  }
}

TEST_CASE("signed-rank statistic", "[inference][wilcoxon]") {
  auto w = wilcoxon_statistic(std::vector<double>{1, -2, 3}, 0.0);
  CHECK(w.statistic == 4.0);
  CHECK(w.nonzero == 3);
  CHECK(wilcoxon_statistic(std::vector<double>{5, 6, 7, 8}, 0.0).statistic == 10.0);
  // Zeros dropped, ties averaged: |d - 1| = {0, 1, 1, 2} -> ranks {-, 1.5, 1.5, 3}.
  auto t = wilcoxon_statistic(std::vector<double>{1, 2, 0, 3}, 1.0);
  CHECK(t.nonzero == 3);
  CHECK(t.statistic == 4.5);
  CHECK(wilcoxon_statistic(std::vector<double>{2, 2}, 2.0).degenerate);
}

TEST_CASE("signed-rank null distribution is symmetric", "[inference][wilcoxon][oracle]") {
  const std::vector<double> d{1.5, -2.0, 3.25, -0.5, 4.0, 2.0, -2.0};
  auto rank = inference_detail::signed_rank_magnitudes(d, 0.0);
  const double total = 7 * 8 / 2.0;
  std::map<double, int> counts;
  for (std::size_t mask = 0; mask < 128; ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < 7; ++i)
      if (mask >> i & 1) w += rank[i];
    ++counts[w];
  }
  for (auto [w, c] : counts) CHECK(counts[total - w] == c);
}

TEST_CASE("d = [3, 5]: p-value functions match hand enumeration", "[inference][fisherian][oracle]") {
  const std::vector<double> d{3, 5};
  SharpNullGrid grid(0.1, -20, 80);
  for (auto [stat, fn] : {std::pair{Statistic::mean_difference, &mean_stat}, std::pair{Statistic::studentized, &t_stat},
                          std::pair{Statistic::wilcoxon_signed_rank, &signed_rank_stat}}) {
    auto r = fisherian_interval(d, grid, 0.05, stat, exact());
    REQUIRE(r.exact);
    REQUIRE(r.draws == 4);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      auto [pu, pl] = brute_p(d, grid.at(g), fn);
      INFO(to_string(stat) << " tau=" << grid.at(g));
      REQUIRE(r.p_upper[g] == Catch::Approx(pu).margin(1e-12));
      REQUIRE(r.p_lower[g] == Catch::Approx(pl).margin(1e-12));
    }
  }
}

TEST_CASE("exact inversion matches brute force on random small series", "[inference][fisherian][oracle]") {
  SharpNullGrid grid(0.1, -150, 150);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto d = normal_draws(6 + seed, 2, 3, seed);
    for (auto [stat, fn] : {std::pair{Statistic::mean_difference, &mean_stat}, std::pair{Statistic::studentized, &t_stat},
                            std::pair{Statistic::wilcoxon_signed_rank, &signed_rank_stat}}) {
      auto r = fisherian_interval(d, grid, 0.05, stat, exact());
      for (std::size_t g = 0; g < grid.size(); g += 7) {
        auto [pu, pl] = brute_p(d, grid.at(g), fn);
        REQUIRE(r.p_upper[g] == Catch::Approx(pu).margin(1e-12));
        REQUIRE(r.p_lower[g] == Catch::Approx(pl).margin(1e-12));
      }
      // Interval read off the brute-force p-values.
      std::optional<double> lo, hi;
      for (std::size_t g = 0; g < grid.size(); ++g)
        if (!lo && brute_p(d, grid.at(g), fn).first > 0.025) lo = grid.at(g);
      for (std::size_t g = grid.size(); g-- > 0;)
        if (!hi && brute_p(d, grid.at(g), fn).second > 0.025) hi = grid.at(g);
      CHECK(r.lower == lo);
      CHECK(r.upper == hi);
    }
  }
}

TEST_CASE("constant differences give p = 1 at the constant", "[inference][fisherian]") {
  const std::vector<double> d(6, 2.0);
  SharpNullGrid grid(0.1, -100, 100);
  for (auto stat : {Statistic::mean_difference, Statistic::wilcoxon_signed_rank}) {
    auto r = fisherian_interval(d, grid, 0.05, stat, mc(3));
    std::size_t g = 120;  // tau = 2.0
    REQUIRE(grid.at(g) == Catch::Approx(2.0));
    CHECK(r.p_upper[g] == 1.0);
    CHECK(r.p_lower[g] == 1.0);
    REQUIRE(r.lower);
    CHECK(*r.lower <= 2.0 + 1e-12);
    CHECK(*r.upper >= 2.0 - 1e-12);
    CHECK(r.warnings.empty() == (stat == Statistic::mean_difference));
  }
}

TEST_CASE("estimate outside the grid is an error", "[inference][fisherian]") {
  const std::vector<double> d{40, 42, 44};
  CHECK_THROWS_AS(fisherian_interval(d, SharpNullGrid(0.1, -100, 100), 0.05, Statistic::mean_difference, mc(1)), GridRangeError);
}

TEST_CASE("Monte Carlo p-values within 0.02 of exact enumeration", "[inference][fisherian][oracle]") {
  SharpNullGrid grid(0.1, -100, 150);
  for (std::size_t P : {8u, 10u, 12u}) {
    auto d = normal_draws(P, 4, 5, 40 + P);
    for (auto stat : {Statistic::mean_difference, Statistic::wilcoxon_signed_rank, Statistic::studentized}) {
      auto e = fisherian_interval(d, grid, 0.05, stat, exact());
      auto m = fisherian_interval(d, grid, 0.05, stat, mc(99 + P));
      REQUIRE(e.exact);
      REQUIRE_FALSE(m.exact);
      double worst = 0;
      for (std::size_t g = 0; g < grid.size(); ++g)
        worst = std::max({worst, std::fabs(e.p_upper[g] - m.p_upper[g]), std::fabs(e.p_lower[g] - m.p_lower[g])});
      INFO(to_string(stat) << " P=" << P);
      CHECK(worst <= 0.02);
    }
  }
}

TEST_CASE("mean-difference p-values are monotone along the grid", "[inference][fisherian][property]") {
  SharpNullGrid grid(0.1, -100, 100);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto d = normal_draws(30 + seed, 1, 6, seed);
    CHECK(p_values_monotone(fisherian_interval(d, grid, 0.05, Statistic::mean_difference, mc(seed))));
    CHECK(p_values_monotone(fisherian_interval(std::vector<double>(d.begin(), d.begin() + 9), grid, 0.05,
                                               Statistic::mean_difference, exact())));
  }
}

TEST_CASE("Fisherian interval is location equivariant", "[inference][fisherian][property]") {
  SharpNullGrid grid(0.1, -300, 300);
  auto d = normal_draws(35, 2, 5, 77);
  for (auto stat : {Statistic::mean_difference, Statistic::wilcoxon_signed_rank}) {
    auto base = fisherian_interval(d, grid, 0.05, stat, mc(5));
    for (int k : {-40, 7, 55}) {
      const double c = k * 0.1;
      std::vector<double> e(d);
      for (auto& x : e) x += c;
      auto r = fisherian_interval(e, grid, 0.05, stat, mc(5));
      REQUIRE(r.lower);
      CHECK(*r.lower == Catch::Approx(*base.lower + c).margin(1e-9));
      CHECK(*r.upper == Catch::Approx(*base.upper + c).margin(1e-9));
    }
  }
}

TEST_CASE("Monte Carlo results do not depend on the thread count", "[inference][fisherian][property]") {
  SharpNullGrid grid(0.1, -100, 100);
  auto d = normal_draws(60, 1, 4, 8);
  auto rs1 = mc(21, 5000);
  auto rs4 = rs1;
  rs4.threads = 4;
  for (auto stat : {Statistic::mean_difference, Statistic::studentized, Statistic::wilcoxon_signed_rank}) {
    auto a = fisherian_interval(d, grid, 0.05, stat, rs1);
    auto b = fisherian_interval(d, grid, 0.05, stat, rs4);
    CHECK(a.p_upper == b.p_upper);
    CHECK(a.p_lower == b.p_lower);
  }
  // Input order does not matter either.
  std::vector<double> rev(d.rbegin(), d.rend());
  CHECK(fisherian_interval(d, grid, 0.05, Statistic::mean_difference, rs1).p_upper ==
        fisherian_interval(rev, grid, 0.05, Statistic::mean_difference, rs1).p_upper);
}

TEST_CASE("studentized and plain intervals agree on constant-effect data", "[inference][studentized]") {
  SharpNullGrid grid(0.1, -100, 200);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto d = normal_draws(80, 5, 8, 300 + seed);
    auto a = fisherian_interval(d, grid, 0.05, Statistic::mean_difference, mc(seed));
    auto b = studentized_interval(d, grid, 0.05, mc(seed));
    CHECK(std::fabs(*a.lower - *b.lower) <= 0.1 + 1e-9);
    CHECK(std::fabs(*a.upper - *b.upper) <= 0.1 + 1e-9);
  }
}

TEST_CASE("analyze widens the grid when needed", "[inference]") {
  PairDifferenceSeries s{"so2", 0, normal_draws(40, 50, 10, 4), {}, 0};
  InferenceSettings set;
  set.randomization = mc(2, 2000);
  set.wilcoxon = true;
  auto r = analyze(s, set);
  CHECK(r.grid.min() < r.estimate);
  CHECK(r.grid.max() > r.estimate);
  REQUIRE(r.fisherian.lower);
  CHECK_FALSE(r.fisherian.lower_at_grid_edge);
  CHECK_FALSE(r.fisherian.upper_at_grid_edge);
  CHECK(*r.fisherian.lower < r.estimate);
  CHECK(*r.fisherian.upper > r.estimate);
  REQUIRE(r.neyman);
  REQUIRE(r.studentized);
  REQUIRE(r.wilcoxon);
  CHECK(*r.wilcoxon->lower < *r.wilcoxon->upper);

  set.auto_widen = false;
  CHECK_THROWS_AS(analyze(s, set), GridRangeError);
}

TEST_CASE("injected effect recovered by the mean of differences", "[inference]") {
  auto d = normal_draws(5000, 5, 10, 12);
  CHECK(point_estimate(d) == Catch::Approx(5.0).margin(4 * 10 / std::sqrt(5000.0)));
}

TEST_CASE("subgroup analysis", "[inference][subgroup]") {
  const std::size_t P = 60;
  std::mt19937_64 eng(6);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> y(2 * P), gt(2 * P);
  std::vector<std::string> wind(2 * P);
  MatchedPairSet set;
  for (std::size_t i = 0; i < P; ++i) {
    const bool west = i % 3 == 0;
    y[2 * i] = 30 + (west ? 10.0 : 0.0) + g(eng);
    y[2 * i + 1] = 30 + g(eng);
    gt[2 * i] = 65000;
    wind[2 * i] = wind[2 * i + 1] = west ? "West" : "East";
    set.pairs.push_back({2 * i, 2 * i + 1});
  }
  wind[2 * P - 1] = "West";  // pair 59 is East at t and West at c
  TimeSeriesDataset ds(Granularity::hourly, hourly_stamps(2 * P),
                       {numeric("no2", ColumnRole::outcome, y), categorical("wind_dir", wind),
                        numeric("gt", ColumnRole::intervention, gt), categorical("one", std::vector<std::string>(2 * P, "all"))});
  InferenceSettings s;
  s.randomization = mc(1, 2000);

  CHECK_THROWS_AS(subgroup_analysis(ds, set, "no2", 0, "wind_dir", "gt", s), DataError);
  set.pairs.pop_back();

  auto rep = subgroup_analysis(ds, set, "no2", 0, "wind_dir", "gt", s);
  REQUIRE(rep.groups.size() == 2);
  CHECK(rep.groups[0].group == "East");
  CHECK(rep.groups[0].report->estimate == Catch::Approx(0.0).margin(0.6));
  CHECK(rep.groups[1].report->estimate == Catch::Approx(10.0).margin(0.8));
  CHECK(rep.scatter.size() == set.size());
  CHECK(*rep.scatter[0].intervention_difference == 65000.0);

  auto one = subgroup_analysis(ds, set, "no2", 0, "one", "", s);
  auto all = analyze(pair_differences(ds, set, "no2", 0), s);
  REQUIRE(one.groups.size() == 1);
  CHECK(one.groups[0].report->fisherian.p_upper == all.fisherian.p_upper);
  CHECK(one.groups[0].report->fisherian.lower == all.fisherian.lower);

  MatchedPairSet single;
  single.pairs = {set.pairs[0], set.pairs[1]};  // West, East: one pair each
  auto tiny = subgroup_analysis(ds, single, "no2", 0, "wind_dir", "", s);
  REQUIRE(tiny.groups.size() == 2);
  CHECK_FALSE(tiny.groups[0].report);
  CHECK_FALSE(tiny.groups[0].note.empty());
}
