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

#include <boost/math/distributions/normal.hpp>

namespace pairexp {

inline double normal_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<double>{}, x); }
inline double normal_pdf(double x) { return boost::math::pdf(boost::math::normal_distribution<double>{}, x); }

/// Upper-tail cdf, accurate far in the right tail.
inline double normal_sf(double x) {
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>{}, x));
}

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>{}, p); }

/// z_{1 - alpha/2}; exactly 1.96 at alpha = 0.05 so reported intervals match
/// the conventional rounding.
inline double two_sided_critical(double alpha) { return alpha == 0.05 ? 1.96 : normal_quantile(1.0 - alpha / 2.0); }

}  // namespace pairexp
