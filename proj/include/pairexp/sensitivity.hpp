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

#include <initializer_list>
#include <span>
#include <vector>

#include "pairexp/inference.hpp"

namespace pairexp {

/// Bounds on how much a hidden confounder may multiply the within-pair odds
/// of treatment. Values are >= 1 and strictly increasing.
class GammaLadder {
 public:
  GammaLadder() : values_{1.0, 1.25, 1.5, 2.0} {}
  GammaLadder(std::initializer_list<double> values) : GammaLadder(std::vector<double>(values)) {}
  explicit GammaLadder(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ParameterError("gamma ladder must not be empty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] >= 1.0)) throw ParameterError("gamma must be >= 1, got " + format_number(values_[i]));
      if (i > 0 && !(values_[i] > values_[i - 1])) throw ParameterError("gamma ladder must be strictly increasing");
    }
  }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

struct GammaInterval {
  double gamma = 1.0;
  std::optional<double> lower;
  std::optional<double> upper;
  FisherianResult detail;
};

struct SensitivityResult {
  Statistic statistic = Statistic::mean_difference;
  std::vector<GammaInterval> intervals;

  /// interval(Gamma_1) inside interval(Gamma_2) whenever Gamma_1 < Gamma_2.
  bool nested() const {
    for (std::size_t i = 1; i < intervals.size(); ++i) {
      const auto& a = intervals[i - 1];
      const auto& b = intervals[i];
      if (!a.lower || !a.upper) continue;
      if (!b.lower || !b.upper || *b.lower > *a.lower || *b.upper < *a.upper) return false;
    }
    return true;
  }
};

/// Worst-case intervals under hidden bias of size Gamma. The upper p-value
/// lets each adjusted difference be positive with probability Gamma/(1+Gamma),
/// the lower p-value with 1/(1+Gamma). The same sign draws serve every Gamma,
/// so Gamma = 1 reproduces the plain Fisherian interval exactly.
inline SensitivityResult rosenbaum_intervals(std::span<const double> d, const SharpNullGrid& grid, double alpha,
                                             const GammaLadder& ladder, const RandomizationSettings& rs,
                                             Statistic stat = Statistic::mean_difference) {
  if (d.empty()) throw ParameterError("rosenbaum_intervals: empty difference series");
  if (stat == Statistic::studentized) throw ParameterError("rosenbaum_intervals: use mean_difference or wilcoxon_signed_rank");
  SensitivityResult out;
  out.statistic = stat;
  for (double gamma : ladder.values()) {
    const double hi = gamma / (1.0 + gamma);
    const double lo = 1.0 / (1.0 + gamma);
    GammaInterval gi;
    gi.gamma = gamma;
    gi.detail = invert_sharp_nulls(d, grid, alpha, stat, rs, hi, lo);
    gi.lower = gi.detail.lower;
    gi.upper = gi.detail.upper;
    out.intervals.push_back(std::move(gi));
  }
  return out;
}

struct PlaceboResult {
  std::vector<IntervalReport> reports;
  std::vector<int> flagged_offsets;  // Fisherian interval excludes 0
};

/// Lagged outcomes as placebo outcomes: the treatment at t cannot move them,
/// so intervals excluding zero point at residual imbalance.
inline PlaceboResult placebo_lag_analysis(const TimeSeriesDataset& ds, const MatchedPairSet& set, std::string_view outcome,
                                          std::span<const int> offsets, const InferenceSettings& s) {
  for (int j : offsets)
    if (j >= 0) throw ParameterError("placebo_lag_analysis: offsets must be strictly negative, got " + std::to_string(j));
  PlaceboResult r;
  for (int j : offsets) {
    auto series = pair_differences(ds, set, outcome, j);
    IntervalReport rep = analyze(series, s);
    const auto& f = rep.fisherian;
    if (f.lower && f.upper && (*f.lower > 0.0 || *f.upper < 0.0)) r.flagged_offsets.push_back(j);
    r.reports.push_back(std::move(rep));
  }
  return r;
}

}  // namespace pairexp
