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
#include <optional>
#include <span>
#include <vector>

#include "pairexp/common.hpp"
#include "pairexp/gaussian.hpp"

namespace pairexp {

/// Power, sign-error rate and exaggeration ratio of a significant estimate
/// when the true effect is `effect` and the estimate is N(effect, se^2).
struct RetrodesignResult {
  double effect = 0;
  double se = 0;
  double alpha = 0.05;
  double power = 0;
  double type_s = 0;
  std::optional<double> type_m;  // undefined at effect 0
  bool marked = false;           // e.g. the half-estimate reference point
};

inline RetrodesignResult retrodesign(double effect, double se, double alpha = 0.05) {
  if (!(se > 0.0)) throw ParameterError("retrodesign: standard error must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("retrodesign: alpha must lie in (0, 1)");
  RetrodesignResult r{effect, se, alpha, 0, 0, std::nullopt, false};
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double lambda = std::fabs(effect) / se;
  // Work with |effect|; signs mirror.
  const double p_hi = normal_sf(z - lambda);     // estimate/se > z
  const double p_lo = normal_cdf(-z - lambda);   // estimate/se < -z
  r.power = p_hi + p_lo;
  if (effect == 0.0) {
    r.type_s = 0.5;
    return r;
  }
  r.type_s = p_lo / r.power;
  // E[|Z| ; |Z| > z] for Z ~ N(lambda, 1).
  const double tail_hi = lambda * p_hi + normal_pdf(z - lambda);
  const double tail_lo = -lambda * p_lo + normal_pdf(z + lambda);
  r.type_m = (tail_hi + tail_lo) / r.power / lambda;
  return r;
}

/// One result per effect size. `marked_effect`, when set, flags the grid
/// point equal to it (for example half the observed estimate).
inline std::vector<RetrodesignResult> retrodesign_curve(double se, double alpha, std::span<const double> effects,
                                                        std::optional<double> marked_effect = std::nullopt) {
  std::vector<RetrodesignResult> out;
  out.reserve(effects.size());
  for (double e : effects) {
    if (!(e > 0.0)) throw ParameterError("retrodesign_curve: effect sizes must be positive");
    auto r = retrodesign(e, se, alpha);
    r.marked = marked_effect && std::fabs(*marked_effect - e) <= 1e-12 * (1.0 + std::fabs(e));
    out.push_back(r);
  }
  return out;
}

/// Power non-decreasing and type M non-increasing along an increasing grid.
inline bool curve_monotone(std::span<const RetrodesignResult> curve) {
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].power < curve[i - 1].power - 1e-12) return false;
    if (curve[i].type_m && curve[i - 1].type_m && *curve[i].type_m > *curve[i - 1].type_m + 1e-12) return false;
  }
  return true;
}

}  // namespace pairexp
