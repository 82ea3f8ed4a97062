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


#include <random>

#include "catch_amalgamated.hpp"
#include "pairexp/sensitivity.hpp"
#include "pairexp/synth.hpp"
#include "support.hpp"

using namespace pairexp;
using namespace testing_support;

namespace {

std::vector<double> draws(std::size_t n, double mu, double sd, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> g(mu, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = std::round(g(eng) * 100) / 100;
  return v;
}

RandomizationSettings mc(std::uint64_t seed) {
  RandomizationSettings rs;
  rs.draws = 10000;
  rs.exact_max_pairs = 0;
  rs.seed = seed;
  return rs;
}

}  // namespace

TEST_CASE("gamma ladder validation", "[sensitivity]") {
  CHECK(GammaLadder().values() == std::vector<double>{1.0, 1.25, 1.5, 2.0});
  CHECK_THROWS_AS(GammaLadder({0.8, 1.0}), ParameterError);
  CHECK_THROWS_AS(GammaLadder({1.0, 1.0}), ParameterError);
  CHECK_THROWS_AS(GammaLadder(std::vector<double>{}), ParameterError);
}

TEST_CASE("gamma 1 is bit-identical to the plain interval", "[sensitivity][property]") {
  SharpNullGrid grid(0.1, -100, 200);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto d = draws(50 + seed, 4, 7, seed);
    for (auto stat : {Statistic::mean_difference, Statistic::wilcoxon_signed_rank}) {
      auto plain = fisherian_interval(d, grid, 0.05, stat, mc(seed));
      auto sens = rosenbaum_intervals(d, grid, 0.05, GammaLadder({1.0}), mc(seed), stat);
      CHECK(sens.intervals[0].lower == plain.lower);
      CHECK(sens.intervals[0].upper == plain.upper);
      CHECK(sens.intervals[0].detail.p_upper == plain.p_upper);
      CHECK(sens.intervals[0].detail.p_lower == plain.p_lower);
    }
  }
}

TEST_CASE("sensitivity intervals are nested along the ladder", "[sensitivity][property]") {
  SharpNullGrid grid(0.1, -200, 300);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto d = draws(40, 5, 8, 100 + seed);
    auto r = rosenbaum_intervals(d, grid, 0.05, GammaLadder({1.0, 1.5, 2.0}), mc(seed));
    CHECK(r.nested());
    CHECK(*r.intervals[2].lower < *r.intervals[0].lower);
    CHECK(*r.intervals[2].upper > *r.intervals[0].upper);
  }
}

TEST_CASE("exact biased-sign tails match a weighted enumeration", "[sensitivity][oracle]") {
  const std::vector<double> d{1.2, -0.4, 3.1, 2.2, 0.7, 5.0, -1.3};
  SharpNullGrid grid(0.1, -50, 80);
  RandomizationSettings rs;
  const double gamma = 1.5;
  auto r = rosenbaum_intervals(d, grid, 0.05, GammaLadder({gamma}), rs);
  const auto& det = r.intervals[0].detail;
  REQUIRE(det.exact);
  const double hi = gamma / (1 + gamma), lo = 1 / (1 + gamma);
  const double obs = point_estimate(d);
  for (std::size_t g = 0; g < grid.size(); g += 3) {
    const double tau = grid.at(g);
    double pu = 0, pl = 0;
    for (std::size_t mask = 0; mask < 128; ++mask) {
      double s = 0;
      int k = 0;
      for (std::size_t i = 0; i < 7; ++i) {
        bool pos = !(mask >> i & 1);
        k += pos;
        s += (pos ? 1 : -1) * std::fabs(d[i] - tau);
      }
      const double sim = tau + s / 7;
      if (sim >= obs - 1e-9) pu += std::pow(hi, k) * std::pow(1 - hi, 7 - k);
      if (sim <= obs + 1e-9) pl += std::pow(lo, k) * std::pow(1 - lo, 7 - k);
    }
    REQUIRE(det.p_upper[g] == Catch::Approx(pu).margin(1e-12));
    REQUIRE(det.p_lower[g] == Catch::Approx(pl).margin(1e-12));
  }
}

TEST_CASE("studentized sensitivity is rejected", "[sensitivity]") {
  const std::vector<double> d{1, 2, 3};
  CHECK_THROWS_AS(rosenbaum_intervals(d, SharpNullGrid(0.1, -100, 100), 0.05, GammaLadder(), mc(1), Statistic::studentized),
                  ParameterError);
}

TEST_CASE("placebo lags", "[sensitivity][placebo]") {
  std::vector<double> y(200);
  std::mt19937_64 eng(2);
  std::normal_distribution<double> g(30, 5);
  for (auto& v : y) v = g(eng);
  MatchedPairSet set;
  for (std::size_t t = 10; t + 30 < 200; t += 20) set.pairs.push_back({t, t + 10});
  TimeSeriesDataset ds(Granularity::hourly, hourly_stamps(200), {numeric("no2", ColumnRole::outcome, y)});
  InferenceSettings s;
  s.randomization = mc(3);
  const int bad[] = {-1, 0};
  CHECK_THROWS_AS(placebo_lag_analysis(ds, set, "no2", bad, s), ParameterError);

  // Identical outcomes for both members: every placebo estimate is 0.
  std::vector<double> z(200);
  for (std::size_t t = 0; t < 200; ++t) z[t] = static_cast<double>((t % 10) * 3);
  TimeSeriesDataset same(Granularity::hourly, hourly_stamps(200), {numeric("no2", ColumnRole::outcome, z)});
  const int offs[] = {-2, -1};
  auto r = placebo_lag_analysis(same, set, "no2", offs, s);
  REQUIRE(r.reports.size() == 2);
  for (const auto& rep : r.reports) CHECK(rep.estimate == 0.0);
  CHECK(r.flagged_offsets.empty());
}

TEST_CASE("placebo intervals cover zero when the effect is only at offset 0", "[sensitivity][placebo][synth]") {
  // Pairs of hourly units whose outcomes differ only through an effect at t.
  const int reps = 200;
  int covered[2] = {0, 0};
  InferenceSettings s;
  s.studentized = false;
  for (int r = 0; r < reps; ++r) {
    const std::size_t pairs = 60;
    std::mt19937_64 eng(1000 + r);
    std::normal_distribution<double> g;
    const std::size_t n = 6 * pairs;
    std::vector<double> y(n);
    for (auto& v : y) v = 30 + 5 * g(eng);
    MatchedPairSet set;
    for (std::size_t i = 0; i < pairs; ++i) {
      std::size_t t = 6 * i + 2, c = 6 * i + 5;
      if (g(eng) > 0) std::swap(t, c);
      y[t] += 5.0;
      set.pairs.push_back({t, c});
    }
    TimeSeriesDataset ds(Granularity::hourly, hourly_stamps(n), {numeric("no2", ColumnRole::outcome, y)});
    s.randomization = mc(derive_seed(7, std::to_string(r)));
    s.randomization.draws = 2000;
    const int offs[] = {-2, -1};
    auto res = placebo_lag_analysis(ds, set, "no2", offs, s);
    for (int k = 0; k < 2; ++k) {
      const auto& f = res.reports[k].fisherian;
      covered[k] += (*f.lower <= 0.0 && 0.0 <= *f.upper);
    }
  }
  // Binomial(200, 0.95): 4 standard deviations below 0.95 is about 0.888.
  CHECK(covered[0] / double(reps) >= 0.88);
  CHECK(covered[1] / double(reps) >= 0.88);
}
