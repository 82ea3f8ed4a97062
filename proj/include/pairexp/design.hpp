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

#include <cstdint>
#include <string>
#include <vector>

#include "pairexp/dataset.hpp"

namespace pairexp {

enum class Arm : std::uint8_t { control = 0, treated = 1, excluded = 2 };

enum class TreatmentMode {
  positive_measure,  // treated iff measure > 0, control iff measure == 0
  exact_count,       // treated iff count == 1, control iff count == 0, else excluded
};

inline TreatmentMode parse_treatment_mode(std::string_view s) {
  if (s == "positive_measure") return TreatmentMode::positive_measure;
  if (s == "exact_count") return TreatmentMode::exact_count;
  throw ConfigError("treatment: mode must be \"positive_measure\" or \"exact_count\", got \"" + std::string(s) + "\"");
}

struct TreatmentRule {
  TreatmentMode mode = TreatmentMode::positive_measure;
  std::string column;
};

struct TreatmentCounts {
  std::size_t total = 0;
  std::size_t treated = 0;
  std::size_t control = 0;
  std::size_t excluded = 0;
  std::size_t excluded_missing = 0;  // subset of excluded: measure not observed
};

/// A dataset with one materialised treatment indicator.
struct LabeledDataset {
  TimeSeriesDataset data;
  TreatmentRule rule;
  std::vector<Arm> arms;
  TreatmentCounts counts;

  bool treated(std::size_t t) const { return arms[t] == Arm::treated; }
  bool control(std::size_t t) const { return arms[t] == Arm::control; }
};

inline Arm classify(TreatmentMode mode, double measure) {
  if (mode == TreatmentMode::positive_measure) return measure > 0.0 ? Arm::treated : Arm::control;
  if (measure == 0.0) return Arm::control;
  if (measure == 1.0) return Arm::treated;
  return Arm::excluded;
}

/// Units whose measure is missing are excluded. Negative measures are a data
/// error even though the dataset constructor already rejects them for columns
/// declared as interventions; the rule may point at any numeric column.
inline LabeledDataset assign_treatment(const TimeSeriesDataset& ds, const TreatmentRule& rule) {
  const Column& col = ds.column(rule.column);
  if (col.spec.kind != ColumnKind::numeric)
    throw ConfigError("treatment: column \"" + rule.column + "\" must be numeric");
  LabeledDataset out{ds, rule, std::vector<Arm>(ds.size(), Arm::excluded), {}};
  out.counts.total = ds.size();
  for (std::size_t t = 0; t < ds.size(); ++t) {
    auto v = col.at(static_cast<std::ptrdiff_t>(t));
    if (!v) {
      ++out.counts.excluded;
      ++out.counts.excluded_missing;
      continue;
    }
    if (*v < 0.0)
      throw DataError("treatment: negative value " + format_number(*v) + " in \"" + rule.column + "\" at " +
                      format_timestamp(ds.timestamp(t), ds.granularity()));
    Arm a = classify(rule.mode, *v);
    out.arms[t] = a;
    if (a == Arm::treated) ++out.counts.treated;
    else if (a == Arm::control) ++out.counts.control;
    else ++out.counts.excluded;
  }
  return out;
}

/// Offsets to report (contiguous, containing 0) and the outcomes analysed.
struct ExperimentDesign {
  TreatmentRule rule;
  int min_offset = 0;
  int max_offset = 0;
  std::vector<std::string> outcomes;

  void validate() const {
    if (min_offset > 0 || max_offset < 0 || min_offset > max_offset)
      throw ConfigError("design: offsets must form a contiguous range containing 0, got [" + std::to_string(min_offset) + ", " +
                        std::to_string(max_offset) + "]");
  }
  std::vector<int> offsets() const {
    std::vector<int> out;
    for (int j = min_offset; j <= max_offset; ++j) out.push_back(j);
    return out;
  }
};

}  // namespace pairexp
