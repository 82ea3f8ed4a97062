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

#include <span>
#include <string_view>

#include "pairexp/matching.hpp"

namespace pairexp {

struct CompleteCaseResult {
  MatchedPairSet pairs;
  std::size_t dropped = 0;
  double dropped_fraction = 0.0;
};

/// Keeps pairs whose treated and control outcomes are observed and not
/// flagged as imputed at every requested offset.
inline CompleteCaseResult complete_case_filter(const TimeSeriesDataset& ds, const MatchedPairSet& set, std::string_view outcome,
                                               std::span<const int> offsets) {
  const Column& col = ds.column(outcome);
  CompleteCaseResult r;
  r.pairs = set;
  r.pairs.pairs.clear();
  auto usable = [&](std::size_t unit, int j) {
    auto t = static_cast<std::ptrdiff_t>(unit) + j;
    return col.is_observed(t) && !col.is_imputed(t);
  };
  for (const auto& p : set.pairs) {
    bool keep = true;
    for (int j : offsets) {
      if (!usable(p.treated, j) || !usable(p.control, j)) {
        keep = false;
        break;
      }
    }
    if (keep) r.pairs.pairs.push_back(p);
    else ++r.dropped;
  }
  r.dropped_fraction = set.empty() ? 0.0 : static_cast<double>(r.dropped) / static_cast<double>(set.size());
  return r;
}

}  // namespace pairexp
