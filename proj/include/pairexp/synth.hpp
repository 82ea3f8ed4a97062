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

#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pairexp/calendar.hpp"
#include "pairexp/inference.hpp"

namespace pairexp {

// ---------------------------------------------------------------------------
// Time-series generator

/// Seasonal weather, a regular arrival schedule and outcomes with a known
/// treatment effect at the arrival unit.
struct SynthConfig {
  std::size_t length = 24 * 365;
  Granularity granularity = Granularity::hourly;
  std::string start = "2008-01-01";
  std::uint64_t seed = 1;

  // Traffic: on each day a call happens with probability `arrival_day_prob`
  // (shifted by temperature when `confounding` != 0); each call brings one
  // vessel, two with probability `second_vessel_prob`. Hourly arrivals fall
  // in [window_start, window_end] except with probability `off_window_prob`.
  double arrival_day_prob = 0.5;
  double second_vessel_prob = 0.15;
  int window_start = 6;
  int window_end = 9;
  double off_window_prob = 0.04;
  double mean_tonnage = 65000.0;
  double confounding = 0.0;  // log-odds shift per 5 degrees above 15

  // Outcomes: base + temperature/wind effects + AR(1) noise + effect at t.
  std::vector<std::string> outcomes{"no2"};
  double effect = 0.0;             // constant effect tau*
  double effect_sd = 0.0;          // unit-level heterogeneity around tau*
  double noise_sd = 5.0;
  double noise_ar = 0.5;
  double temperature_coef = 0.8;   // confounder path into outcomes
  double missing_rate = 0.0;       // MCAR share of missing outcome cells
};

struct SynthTruth {
  double effect = 0.0;
  std::vector<double> unit_effect;  // applied at treated units (0 elsewhere)
  std::size_t arrivals = 0;
  std::size_t arrivals_in_window = 0;
};

struct SynthOutput {
  TimeSeriesDataset dataset;
  SynthTruth truth;
};

namespace synth_detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace synth_detail

/// Columns: temperature, humidity, wind_speed (numeric covariates),
/// wind_dir (East/West), rain (0/1), gross_tonnage and vessels
/// (interventions), one outcome column per configured name.
inline SynthOutput generate(const SynthConfig& cfg) {
  using synth_detail::logistic;
  if (cfg.length == 0) throw ConfigError("synth: length must be positive");
  if (cfg.window_start < 0 || cfg.window_end > 23 || cfg.window_start > cfg.window_end)
    throw ConfigError("synth: arrival window must satisfy 0 <= start <= end <= 23");
  auto start = parse_timestamp(cfg.start);
  if (!start) throw ConfigError("synth: bad start timestamp \"" + cfg.start + "\"");

  const bool hourly = cfg.granularity == Granularity::hourly;
  const std::size_t n = cfg.length;
  const auto step = std::chrono::seconds{step_seconds(cfg.granularity)};
  std::mt19937_64 eng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Timestamp> stamps(n);
  for (std::size_t t = 0; t < n; ++t) stamps[t] = *start + step * static_cast<std::int64_t>(t);

  auto numeric = [&](std::string name, ColumnRole role, bool integral = false) {
    return Column::empty({std::move(name), role, ColumnKind::numeric, "", integral}, n);
  };
  Column temp = numeric("temperature", ColumnRole::covariate);
  Column hum = numeric("humidity", ColumnRole::covariate);
  Column wspd = numeric("wind_speed", ColumnRole::covariate);
  Column wdir = Column::empty({"wind_dir", ColumnRole::covariate, ColumnKind::categorical, "", false}, n);
  wdir.levels = {"East", "West"};
  Column rain = numeric("rain", ColumnRole::covariate);
  Column tonnage = numeric("gross_tonnage", ColumnRole::intervention);
  Column vessels = numeric("vessels", ColumnRole::intervention, true);

  const double phi_w = hourly ? 0.9 : 0.6;
  const double phi_dir = hourly ? 0.97 : 0.7;
  double ar_t = 0, ar_h = 0, ar_s = 0, ar_dir = gauss(eng);
  bool raining = false;
  for (std::size_t t = 0; t < n; ++t) {
    using namespace std::chrono;
    sys_days day = floor<days>(stamps[t]);
    auto doy = static_cast<double>((day - sys_days{year_month_day{year_month_day{day}.year(), January, 1d}}).count());
    double hour = hourly ? static_cast<double>(duration_cast<hours>(stamps[t] - day).count()) : 12.0;
    ar_t = phi_w * ar_t + gauss(eng) * std::sqrt(1 - phi_w * phi_w) * 2.0;
    ar_h = phi_w * ar_h + gauss(eng) * std::sqrt(1 - phi_w * phi_w) * 6.0;
    ar_s = phi_w * ar_s + gauss(eng) * std::sqrt(1 - phi_w * phi_w) * 1.2;
    ar_dir = phi_dir * ar_dir + gauss(eng) * std::sqrt(1 - phi_dir * phi_dir);
    double seasonal = 15.0 + 8.0 * std::sin(2 * std::numbers::pi * (doy - 110.0) / 365.0);
    double diurnal = hourly ? 4.0 * std::sin(2 * std::numbers::pi * (hour - 9.0) / 24.0) : 0.0;
    double tv = seasonal + diurnal + ar_t;
    temp.set(t, std::round(tv * 10.0) / 10.0);
    hum.set(t, std::round(std::clamp(65.0 - 1.2 * (tv - 15.0) + ar_h, 5.0, 100.0)));
    wspd.set(t, std::round(std::max(0.0, 4.0 + ar_s) * 10.0) / 10.0);
    wdir.set(t, ar_dir > 0 ? 0.0 : 1.0);
    raining = raining ? unif(eng) < 0.7 : unif(eng) < (hourly ? 0.03 : 0.15);
    rain.set(t, raining ? 1.0 : 0.0);
    tonnage.set(t, 0.0);
    vessels.set(t, 0.0);
  }

  SynthTruth truth;
  truth.effect = cfg.effect;
  truth.unit_effect.assign(n, 0.0);
  auto vessel_tonnage = [&] { return std::round(cfg.mean_tonnage * std::exp(0.3 * gauss(eng) - 0.045)); };
  const std::size_t per_day = hourly ? 24 : 1;
  for (std::size_t d0 = 0; d0 < n; d0 += per_day) {
    const std::size_t d1 = std::min(n, d0 + per_day);
    double day_temp = 0;
    for (std::size_t t = d0; t < d1; ++t) day_temp += temp.values[t];
    day_temp /= static_cast<double>(d1 - d0);
    const double base = std::clamp(cfg.arrival_day_prob, 1e-6, 1 - 1e-6);
    const double p = logistic(std::log(base / (1 - base)) + cfg.confounding * (day_temp - 15.0) / 5.0);
    if (unif(eng) >= p) continue;
    const int count = unif(eng) < cfg.second_vessel_prob ? 2 : 1;
    for (int v = 0; v < count; ++v) {
      std::size_t t = d0;
      if (hourly) {
        bool in_window = unif(eng) >= cfg.off_window_prob;
        int h = in_window ? cfg.window_start + static_cast<int>(unif(eng) * (cfg.window_end - cfg.window_start + 1))
                          : static_cast<int>(unif(eng) * 24);
        h = std::min(h, 23);
        t = d0 + static_cast<std::size_t>(h);
        if (t >= d1) continue;
        ++truth.arrivals;
        truth.arrivals_in_window += (h >= cfg.window_start && h <= cfg.window_end);
      } else {
        ++truth.arrivals;
        ++truth.arrivals_in_window;
      }
      tonnage.values[t] += vessel_tonnage();
      vessels.values[t] += 1.0;
    }
  }

  std::vector<Column> cols;
  cols.reserve(7 + cfg.outcomes.size());  // references below must stay valid
  cols.push_back(std::move(temp));
  cols.push_back(std::move(hum));
  cols.push_back(std::move(wspd));
  cols.push_back(std::move(wdir));
  cols.push_back(std::move(rain));

  for (std::size_t t = 0; t < n; ++t) {
    if (tonnage.values[t] > 0.0) truth.unit_effect[t] = cfg.effect + cfg.effect_sd * gauss(eng);
  }
  const Column& tcol = cols[0];
  const Column& scol = cols[2];
  const Column& dcol = cols[3];
  for (std::size_t k = 0; k < cfg.outcomes.size(); ++k) {
    Column y = Column::empty({cfg.outcomes[k], ColumnRole::outcome, ColumnKind::numeric, "ug/m3", false}, n);
    const double base = 20.0 + 5.0 * static_cast<double>(k);
    double ar = 0;
    for (std::size_t t = 0; t < n; ++t) {
      ar = cfg.noise_ar * ar + gauss(eng) * cfg.noise_sd * std::sqrt(1 - cfg.noise_ar * cfg.noise_ar);
      double v = base + cfg.temperature_coef * (tcol.values[t] - 15.0) - 1.5 * (scol.values[t] - 4.0) +
                 3.0 * dcol.values[t] + ar + truth.unit_effect[t];
      bool missing = cfg.missing_rate > 0.0 && unif(eng) < cfg.missing_rate;
      if (!missing) y.set(t, v);
    }
    cols.push_back(std::move(y));
  }
  cols.push_back(std::move(tonnage));
  cols.push_back(std::move(vessels));
  return {TimeSeriesDataset(cfg.granularity, std::move(stamps), std::move(cols)), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Matched-pair generator

/// Directly simulated pairwise experiment: each pair shares a baseline, the
/// treated member is chosen by a fair coin. Unit effects are
/// effect + pair_effect_sd * h_i + unit_effect_sd * e_u.
struct PairedConfig {
  std::size_t pairs = 100;
  double effect = 5.0;
  double baseline_sd = 10.0;
  double noise_sd = 5.0;
  double pair_effect_sd = 0.0;
  double unit_effect_sd = 0.0;
  std::uint64_t seed = 1;
};

struct PairedSample {
  std::vector<double> d;
  double sample_average_effect = 0;  // mean unit effect over all 2P units
};

inline PairedSample generate_pairs(const PairedConfig& cfg) {
  std::mt19937_64 eng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  PairedSample s;
  double total = 0;
  for (std::size_t i = 0; i < cfg.pairs; ++i) {
    const double base = cfg.baseline_sd * gauss(eng);
    const double h = cfg.pair_effect_sd * gauss(eng);
    double y0[2], tau[2];
    for (int u = 0; u < 2; ++u) {
      y0[u] = base + cfg.noise_sd * gauss(eng);
      tau[u] = cfg.effect + h + cfg.unit_effect_sd * gauss(eng);
      total += tau[u];
    }
    const int treated = coin(eng) ? 1 : 0;
    s.d.push_back((y0[treated] + tau[treated]) - y0[1 - treated]);
  }
  s.sample_average_effect = total / (2.0 * static_cast<double>(cfg.pairs));
  return s;
}

// ---------------------------------------------------------------------------
// Coverage harness

struct EstimatorCoverage {
  std::string estimator;
  std::size_t evaluated = 0;
  std::size_t covered = 0;
  std::size_t rejected_zero = 0;  // interval excludes 0
  double width_sum = 0;

  double coverage() const { return evaluated ? static_cast<double>(covered) / static_cast<double>(evaluated) : 0.0; }
  double rejection_rate() const { return evaluated ? static_cast<double>(rejected_zero) / static_cast<double>(evaluated) : 0.0; }
  double mean_width() const { return evaluated ? width_sum / static_cast<double>(evaluated) : 0.0; }
};

struct CoverageSummary {
  std::size_t replications = 0;
  std::size_t empty_experiments = 0;
  double mean_pairs = 0;
  std::vector<EstimatorCoverage> estimators;  // fisherian, neyman, studentized
};

/// Series mode: generate, label, match and analyse the first outcome at
/// offset 0. The target is the mean unit effect over matched treated units.
struct SeriesCoverageConfig {
  SynthConfig synth;
  CalendarTable calendar;
  TreatmentRule rule;
  MatchSpec spec;
};

namespace synth_detail {

inline void tally(EstimatorCoverage& e, std::optional<double> lo, std::optional<double> hi, double target) {
  if (!lo || !hi) return;
  ++e.evaluated;
  e.covered += (*lo <= target + 1e-9 && target - 1e-9 <= *hi);
  e.rejected_zero += (*lo > 0.0 || *hi < 0.0);
  e.width_sum += *hi - *lo;
}

inline void record(CoverageSummary& sum, const IntervalReport& rep, double target) {
  tally(sum.estimators[0], rep.fisherian.lower, rep.fisherian.upper, target);
  if (rep.neyman) tally(sum.estimators[1], rep.neyman->lower, rep.neyman->upper, target);
  if (rep.studentized) tally(sum.estimators[2], rep.studentized->lower, rep.studentized->upper, target);
}

inline CoverageSummary empty_summary(std::size_t reps) {
  CoverageSummary s;
  s.replications = reps;
  s.estimators = {{"fisherian"}, {"neyman"}, {"studentized"}};
  return s;
}

}  // namespace synth_detail

/// Paired mode: replication r uses seed derive_seed(cfg.seed, r) for the data
/// and for the sign draws. Target is the sample average effect.
inline CoverageSummary coverage_experiment(const PairedConfig& cfg, std::size_t replications, const InferenceSettings& settings,
                                           unsigned threads = 1) {
  if (replications < 100) throw ParameterError("coverage_experiment: at least 100 replications are required");
  std::vector<std::optional<IntervalReport>> reports(replications);
  std::vector<double> targets(replications);
  parallel_for(replications, threads, [&](std::size_t r) {
    PairedConfig c = cfg;
    c.seed = derive_seed(cfg.seed, "paired/" + std::to_string(r));
    auto sample = generate_pairs(c);
    InferenceSettings s = settings;
    s.randomization.seed = derive_seed(cfg.seed, "signs/" + std::to_string(r));
    s.randomization.threads = 1;
    PairDifferenceSeries series{"synthetic", 0, sample.d, {}, 0};
    reports[r] = analyze(series, s);
    targets[r] = sample.sample_average_effect;
  });
  auto sum = synth_detail::empty_summary(replications);
  double pairs = 0;
  for (std::size_t r = 0; r < replications; ++r) {
    synth_detail::record(sum, *reports[r], targets[r]);
    pairs += static_cast<double>(reports[r]->pairs);
  }
  sum.mean_pairs = pairs / static_cast<double>(replications);
  return sum;
}

inline CoverageSummary coverage_experiment(const SeriesCoverageConfig& cfg, std::size_t replications, const InferenceSettings& settings,
                                           unsigned threads = 1) {
  if (replications < 100) throw ParameterError("coverage_experiment: at least 100 replications are required");
  if (cfg.synth.outcomes.empty()) throw ConfigError("coverage_experiment: synthetic config has no outcome");
  std::vector<std::optional<IntervalReport>> reports(replications);
  std::vector<double> targets(replications, 0.0);
  parallel_for(replications, threads, [&](std::size_t r) {
    SynthConfig sc = cfg.synth;
    sc.seed = derive_seed(cfg.synth.seed, "series/" + std::to_string(r));
    auto gen = generate(sc);
    auto ds = add_calendar_columns(gen.dataset, cfg.calendar);
    auto labeled = assign_treatment(ds, cfg.rule);
    auto m = match(labeled, cfg.spec, 1);
    auto series = pair_differences_allow_empty(ds, m.pairs, sc.outcomes.front(), 0);
    if (series.d.empty()) return;
    double target = 0;
    for (auto i : series.pair_index) target += gen.truth.unit_effect[m.pairs.pairs[i].treated];
    targets[r] = target / static_cast<double>(series.size());
    InferenceSettings s = settings;
    s.randomization.seed = derive_seed(cfg.synth.seed, "signs/" + std::to_string(r));
    s.randomization.threads = 1;
    reports[r] = analyze(series, s);
  });
  auto sum = synth_detail::empty_summary(replications);
  double pairs = 0;
  for (std::size_t r = 0; r < replications; ++r) {
    if (!reports[r]) {
      ++sum.empty_experiments;
      continue;
    }
    synth_detail::record(sum, *reports[r], targets[r]);
    pairs += static_cast<double>(reports[r]->pairs);
  }
  std::size_t used = replications - sum.empty_experiments;
  sum.mean_pairs = used ? pairs / static_cast<double>(used) : 0.0;
  return sum;
}

}  // namespace pairexp
