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
#include <sstream>

#include "catch_amalgamated.hpp"
#include "pairexp/calendar.hpp"
#include "pairexp/matching.hpp"
#include "pairexp/synth.hpp"
#include "support.hpp"

using namespace pairexp;
using namespace testing_support;

namespace {

// Maximum matching size by DP over subsets of used controls.
std::size_t brute_force_max(std::size_t nt, std::size_t nc, const std::vector<std::vector<int>>& adj) {
  std::vector<int> best(std::size_t{1} << nc, -1);
  best[0] = 0;
  for (std::size_t t = 0; t < nt; ++t) {
    auto next = best;
    for (std::size_t mask = 0; mask < best.size(); ++mask) {
      if (best[mask] < 0) continue;
      for (std::size_t c = 0; c < nc; ++c) {
        if (!adj[t][c] || (mask >> c & 1)) continue;
        auto m2 = mask | (std::size_t{1} << c);
        next[m2] = std::max(next[m2], best[mask] + 1);
      }
    }
    best = std::move(next);
  }
  return static_cast<std::size_t>(*std::max_element(best.begin(), best.end()));
}

struct SmallWorld {
  TimeSeriesDataset ds;
  LabeledDataset labeled;
};

// Daily series with a categorical weekday-like code, a temperature and a
// tonnage column; some temperature cells missing.
SmallWorld small_world(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> g(15, 5);
  std::bernoulli_distribution treat(0.25), miss(0.05);
  std::vector<std::optional<double>> temp(n);
  std::vector<double> gt(n);
  std::vector<std::string> code(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (!miss(eng)) temp[t] = std::round(g(eng) * 10) / 10;
    gt[t] = treat(eng) ? 65000 : 0;
    code[t] = std::to_string(t % 3);
  }
  TimeSeriesDataset ds(Granularity::daily, daily_stamps(n),
                       {numeric("temperature", ColumnRole::covariate, temp), categorical("code", code),
                        numeric("gt", ColumnRole::intervention, gt)});
  auto labeled = assign_treatment(ds, {TreatmentMode::positive_measure, "gt"});
  return {ds, labeled};
}

MatchSpec small_spec() {
  MatchSpec s;
  s.max_distance_days = 30;
  s.constraints = {{"code", 0, ConstraintKind::exact, 0.0},
                   {"temperature", 0, ConstraintKind::caliper, 4.0},
                   {"temperature", -1, ConstraintKind::caliper, 6.0}};
  return s;
}

}  // namespace

TEST_CASE("eligibility examples", "[matching][eligible]") {
  // Units 0 and 240 are 10 days apart on the hourly grid.
  const std::size_t n = 300;
  std::vector<double> temp(n, 20.0), gt(n, 0.0);
  std::vector<std::string> wd(n, "Monday");
  temp[240] = 16.0;
  temp[120] = 16.3;
  temp[72] = 15.9;
  wd[48] = "Tuesday";
  TimeSeriesDataset ds(Granularity::hourly, hourly_stamps(n),
                       {numeric("temperature", ColumnRole::covariate, temp), categorical("weekday", wd),
                        numeric("gt", ColumnRole::intervention, gt)});
  MatchSpec spec;
  spec.constraints = {{"weekday", 0, ConstraintKind::exact, 0.0}, {"temperature", 0, ConstraintKind::caliper, 4.0}};

  CHECK(eligible(ds, 0, 24, spec));           // all equal
  CHECK(eligible(ds, 0, 240, spec));          // |20 - 16| = 4, boundary
  CHECK(eligible(ds, 0, 120, spec));          // 3.7
  CHECK_FALSE(eligible(ds, 0, 72, spec));     // 4.1
  CHECK(eligible(ds, 240, 120, spec));        // 0.3 apart
  CHECK_FALSE(eligible(ds, 0, 48, spec));     // weekday differs
  CHECK_FALSE(eligible(ds, 0, 0, spec));      // same unit

  // 20.3 - 16.3 in binary floating point is not exactly 4.
  temp[0] = 20.3;
  TimeSeriesDataset ds2(Granularity::hourly, hourly_stamps(n),
                        {numeric("temperature", ColumnRole::covariate, temp), categorical("weekday", wd),
                         numeric("gt", ColumnRole::intervention, gt)});
  CHECK(eligible(ds2, 0, 120, spec));
}

TEST_CASE("missing constrained value makes a pair ineligible and is tallied", "[matching][eligible]") {
  std::vector<std::optional<double>> temp{10.0, std::nullopt, 10.0, 10.0};
  TimeSeriesDataset ds(Granularity::daily, daily_stamps(4),
                       {numeric("temperature", ColumnRole::covariate, temp),
                        numeric("gt", ColumnRole::intervention, std::vector<double>{1, 0, 1, 0})});
  MatchSpec spec;
  spec.constraints = {{"temperature", 0, ConstraintKind::caliper, 1.0}};
  CHECK_FALSE(eligible(ds, 0, 1, spec));
  auto edges = candidate_edges(assign_treatment(ds, {TreatmentMode::positive_measure, "gt"}), spec);
  CHECK(edges.control_missing == 1);
  CHECK(edges.edges == std::vector<Edge>{{0, 3}, {2, 3}});
}

TEST_CASE("spec validation", "[matching]") {
  TimeSeriesDataset ds(Granularity::daily, daily_stamps(3), {numeric("temperature", ColumnRole::covariate, std::vector<double>{1, 2, 3})});
  MatchSpec spec;
  spec.constraints = {{"humidity", 0, ConstraintKind::caliper, 9.0}};
  try {
    spec.validate_against(ds);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("humidity") != std::string::npos);
  }
  spec.constraints = {{"temperature", 0, ConstraintKind::caliper, 0.0}};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.constraints = {{"temperature", 0, ConstraintKind::exact, 1.0}};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("candidate edges: single pair and temporal window", "[matching][edges]") {
  std::vector<double> gt(40, 0.0);
  gt[0] = 65000;
  std::vector<double> temp(40, 20.0);
  for (std::size_t t = 1; t < 40; ++t) temp[t] = 100.0;  // no control matches
  temp[5] = 20.0;
  TimeSeriesDataset ds(Granularity::daily, daily_stamps(40),
                       {numeric("temperature", ColumnRole::covariate, temp), numeric("gt", ColumnRole::intervention, gt)});
  MatchSpec spec;
  spec.constraints = {{"temperature", 0, ConstraintKind::caliper, 4.0}};
  auto labeled = assign_treatment(ds, {TreatmentMode::positive_measure, "gt"});
  CHECK(candidate_edges(labeled, spec).edges.size() == 1);

  temp[5] = 100.0;
  temp[35] = 20.0;  // 35 days away
  TimeSeriesDataset far(Granularity::daily, daily_stamps(40),
                        {numeric("temperature", ColumnRole::covariate, temp), numeric("gt", ColumnRole::intervention, gt)});
  CHECK(candidate_edges(assign_treatment(far, {TreatmentMode::positive_measure, "gt"}), spec).edges.empty());
}

TEST_CASE("candidate edges equal the all-pairs scan", "[matching][edges][oracle]") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    auto w = small_world(200, seed);
    auto spec = small_spec();
    spec.same_month = seed % 2 == 0;
    auto fast = candidate_edges(w.labeled, spec);

    // Independent oracle: direct reading of the rule.
    std::vector<Edge> slow;
    const Column& temp = w.ds.column("temperature");
    const Column& code = w.ds.column("code");
    for (std::size_t t = 0; t < 200; ++t) {
      if (!w.labeled.treated(t)) continue;
      for (std::size_t c = 0; c < 200; ++c) {
        if (!w.labeled.control(c)) continue;
        auto dist = t > c ? t - c : c - t;
        if (dist > 30) continue;
        if (spec.same_month) {
          auto m = [&](std::size_t u) {
            return unsigned(std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(w.ds.timestamp(u))}.month());
          };
          if (m(t) != m(c)) continue;
        }
        if (code.values[t] != code.values[c]) continue;
        auto a0 = temp.at(static_cast<std::ptrdiff_t>(t)), b0 = temp.at(static_cast<std::ptrdiff_t>(c));
        auto a1 = temp.at(static_cast<std::ptrdiff_t>(t) - 1), b1 = temp.at(static_cast<std::ptrdiff_t>(c) - 1);
        if (!a0 || !b0 || !a1 || !b1) continue;
        if (std::fabs(*a0 - *b0) > 4.0 + 1e-9 * std::max({1.0, std::fabs(*a0), std::fabs(*b0)})) continue;
        if (std::fabs(*a1 - *b1) > 6.0 + 1e-9 * std::max({1.0, std::fabs(*a1), std::fabs(*b1)})) continue;
        slow.push_back({t, c});
      }
    }
    REQUIRE(fast.edges == slow);
  }
}

TEST_CASE("maximum matching small graphs", "[matching]") {
  SECTION("shared control gives one pair") {
    EdgeList e{{{1, 10}, {2, 10}}};
    CHECK(maximum_matching(e).size() == 1);
  }
  SECTION("2x2 graph has the unique perfect matching") {
    // t1=1, t2=2, c1=10, c2=11
    EdgeList e{{{1, 10}, {1, 11}, {2, 10}}};
    auto m = maximum_matching(e);
    REQUIRE(m.size() == 2);
    CHECK(m.pairs[0] == MatchedPair{1, 11});
    CHECK(m.pairs[1] == MatchedPair{2, 10});
  }
  SECTION("refinement takes the closest free control") {
    EdgeList e{{{10, 2}, {10, 9}}};
    auto m = maximum_matching(e);
    REQUIRE(m.size() == 1);
    CHECK(m.pairs[0].control == 9);
  }
  SECTION("refinement swaps crossing pairs") {
    // Matching {(10,13),(12,11)} has distance 4; {(10,11),(12,13)} has 2.
    EdgeList e{{{10, 11}, {10, 13}, {12, 11}, {12, 13}}};
    auto m = maximum_matching(e);
    CHECK(m.total_distance() == 2);
  }
}

TEST_CASE("matching cardinality equals the brute-force maximum", "[matching][oracle][property]") {
  std::mt19937_64 eng(2024);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t nt = 1 + eng() % 12, nc = 1 + eng() % 12;
    double density = std::uniform_real_distribution<double>(0.05, 0.6)(eng);
    std::bernoulli_distribution edge(density);
    std::vector<std::vector<int>> adj(nt, std::vector<int>(nc, 0));
    EdgeList list;
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t c = 0; c < nc; ++c)
        if (edge(eng)) {
          adj[t][c] = 1;
          list.edges.push_back({2 * t, 2 * c + 1});
        }
    std::sort(list.edges.begin(), list.edges.end());
    auto m = maximum_matching(list);
    REQUIRE(m.size() == brute_force_max(nt, nc, adj));
    std::set<std::size_t> ts, cs;
    for (const auto& p : m.pairs) {
      REQUIRE(ts.insert(p.treated).second);
      REQUIRE(cs.insert(p.control).second);
      REQUIRE(std::binary_search(list.edges.begin(), list.edges.end(), Edge{p.treated, p.control}));
    }
  }
}

TEST_CASE("pairs from a synthetic series re-pass eligibility and are thread invariant", "[matching][property]") {
  SynthConfig cfg;
  cfg.length = 24 * 200;
  cfg.seed = 17;
  auto gen = generate(cfg);
  auto ds = add_calendar_columns(gen.dataset, CalendarTable{});
  auto labeled = assign_treatment(ds, {TreatmentMode::positive_measure, "gross_tonnage"});
  MatchSpec spec;
  spec.constraints = {{"hour", 0, ConstraintKind::exact, 0.0},
                      {"weekday", 0, ConstraintKind::exact, 0.0},
                      {"wind_dir", 0, ConstraintKind::exact, 0.0},
                      {"temperature", 0, ConstraintKind::caliper, 4.0},
                      {"humidity", 0, ConstraintKind::caliper, 9.0},
                      {"wind_speed", 0, ConstraintKind::caliper, 1.8}};
  auto r1 = match(labeled, spec, 1);
  auto r4 = match(labeled, spec, 4);
  REQUIRE(r1.pairs.size() > 10);
  CHECK(r1.pairs.pairs == r4.pairs.pairs);
  CHECK(r1.edges.edges == r4.edges.edges);
  CHECK(audit_pairs(labeled, r1.pairs, spec).empty());
  CHECK(r1.pairs.spec_hash == spec.hash());

  // Broken set is caught by the audit.
  auto broken = r1.pairs;
  broken.pairs.push_back(broken.pairs.front());
  CHECK_FALSE(audit_pairs(labeled, broken, spec).empty());
}

TEST_CASE("cross-pair separation drops close pairs", "[matching]") {
  MatchedPairSet s;
  s.pairs = {{100, 110}, {105, 200}, {400, 390}};
  auto out = enforce_cross_pair_separation(s, 20);
  REQUIRE(out.size() == 2);
  CHECK(out.pairs[0] == MatchedPair{100, 110});
  CHECK(out.pairs[1] == MatchedPair{400, 390});
}

TEST_CASE("spillover report", "[matching][spillover]") {
  const std::int64_t horizons[] = {5};
  SECTION("two pairs far apart") {
    MatchedPairSet s;
    s.pairs = {{0, 24}, {2400, 2424}};
    auto r = spillover_report(s, horizons);
    REQUIRE(r.fractions.size() == 1);
    CHECK(r.fractions[0].second == 0.0);
    CHECK(r.min_cross_distance == std::vector<std::int64_t>{2424, 2376});
  }
  SECTION("single pair has an empty cross-pair section") {
    MatchedPairSet s;
    s.pairs = {{0, 24}};
    auto r = spillover_report(s, horizons);
    CHECK(r.min_cross_distance.empty());
    CHECK(r.fractions.empty());
    CHECK(r.min_within_pair_distance == 24);
  }
  SECTION("fractions agree with a direct count") {
    std::mt19937_64 eng(8);
    MatchedPairSet s;
    std::set<std::size_t> used;
    while (s.size() < 60) {
      std::size_t t = eng() % 5000, c = eng() % 5000;
      if (t == c || !used.insert(t).second || !used.insert(c).second) continue;
      s.pairs.push_back({t, c});
    }
    const std::int64_t hz[] = {5, 24, 100};
    auto r = spillover_report(s, hz);
    for (std::size_t k = 0; k < 3; ++k) {
      std::size_t hit = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        for (std::size_t j = 0; j < s.size(); ++j)
          if (j != i) best = std::min<std::int64_t>(best, std::llabs(std::int64_t(s.pairs[i].treated) - std::int64_t(s.pairs[j].control)));
        REQUIRE(r.min_cross_distance[i] == best);
        hit += best <= hz[k];
      }
      CHECK(r.fractions[k].second == Catch::Approx(double(hit) / s.size()));
    }
  }
  SECTION("empty set is rejected") {
    CHECK_THROWS_AS(spillover_report(MatchedPairSet{}, horizons), ParameterError);
  }
}

TEST_CASE("pair csv export", "[matching]") {
  TimeSeriesDataset ds(Granularity::hourly, hourly_stamps(30), {numeric("x", ColumnRole::covariate, std::vector<double>(30, 1.0))});
  MatchedPairSet s;
  s.pairs = {{2, 26}};
  std::ostringstream out;
  write_pairs_csv(out, s, ds);
  CHECK(out.str() ==
        "treated_timestamp,control_timestamp,temporal_distance\n"
        "2010-03-01T02:00:00,2010-03-02T02:00:00,24\n");
}
