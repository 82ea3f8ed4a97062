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

// Small builders shared by the unit tests.

#include <optional>
#include <string>
#include <vector>

#include "pairexp/dataset.hpp"

namespace testing_support {

using namespace pairexp;

inline std::vector<Timestamp> hourly_stamps(std::size_t n, const char* start = "2010-03-01T00:00") {
  std::vector<Timestamp> ts(n);
  auto t0 = *parse_timestamp(start);
  for (std::size_t i = 0; i < n; ++i) ts[i] = t0 + std::chrono::hours(static_cast<long>(i));
  return ts;
}

inline std::vector<Timestamp> daily_stamps(std::size_t n, const char* start = "2010-03-01") {
  std::vector<Timestamp> ts(n);
  auto t0 = *parse_timestamp(start);
  for (std::size_t i = 0; i < n; ++i) ts[i] = t0 + std::chrono::days(static_cast<long>(i));
  return ts;
}

inline Column numeric(std::string name, ColumnRole role, const std::vector<std::optional<double>>& v) {
  Column c = Column::empty({std::move(name), role, ColumnKind::numeric, "", false}, v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) c.set(i, *v[i]);
  return c;
}

inline Column numeric(std::string name, ColumnRole role, const std::vector<double>& v) {
  Column c = Column::empty({std::move(name), role, ColumnKind::numeric, "", false}, v.size());
  for (std::size_t i = 0; i < v.size(); ++i) c.set(i, v[i]);
  return c;
}

inline Column categorical(std::string name, const std::vector<std::string>& v) {
  Column c = Column::empty({std::move(name), ColumnRole::covariate, ColumnKind::categorical, "", false}, v.size());
  for (std::size_t i = 0; i < v.size(); ++i) c.set(i, c.intern(v[i]));
  return c;
}

}  // namespace testing_support
