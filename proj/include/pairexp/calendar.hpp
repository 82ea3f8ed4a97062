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

#include <set>
#include <string>
#include <vector>

#include "pairexp/dataset.hpp"

namespace pairexp {

/// Jurisdiction-specific day lists plus the calendar fields to derive.
/// Recognised fields: hour, weekday, month, year, holiday, bank_day.
struct CalendarTable {
  std::set<std::chrono::sys_days> holidays;
  std::set<std::chrono::sys_days> bank_days;
  std::vector<std::string> derive{"hour", "weekday", "month", "year", "holiday", "bank_day"};
};

inline std::chrono::sys_days parse_day(std::string_view s) {
  auto ts = parse_timestamp(s);
  if (!ts || s.size() != 10) throw ConfigError("calendar: expected YYYY-MM-DD, got \"" + std::string(s) + "\"");
  return std::chrono::floor<std::chrono::days>(*ts);
}

namespace calendar_detail {

inline Column categorical(std::string name, std::size_t n, std::vector<std::string> levels) {
  Column c = Column::empty({std::move(name), ColumnRole::covariate, ColumnKind::categorical, "", false}, n);
  c.levels = std::move(levels);
  return c;
}

}  // namespace calendar_detail

/// Adds calendar covariates derived from each unit's timestamp. Gap-filled
/// units get calendar values too, since their timestamps are known.
inline TimeSeriesDataset add_calendar_columns(const TimeSeriesDataset& ds, const CalendarTable& cal) {
  using namespace std::chrono;
  using calendar_detail::categorical;
  const std::size_t n = ds.size();
  TimeSeriesDataset out = ds;
  for (const auto& field : cal.derive) {
    if (ds.has_column(field)) throw ConfigError("calendar: column \"" + field + "\" already exists");
    Column c;
    if (field == "hour") {
      std::vector<std::string> levels;
      for (int h = 0; h < 24; ++h) levels.push_back(std::to_string(h));
      c = categorical(field, n, std::move(levels));
    } else if (field == "weekday") {
      c = categorical(field, n, {"Sunday", "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday"});
    } else if (field == "month") {
      c = categorical(field, n, {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12"});
    } else if (field == "holiday" || field == "bank_day") {
      c = categorical(field, n, {"0", "1"});
    } else if (field == "year") {
      c = Column::empty({field, ColumnRole::covariate, ColumnKind::numeric, "", false}, n);
    } else {
      throw ConfigError("calendar: unknown derived field \"" + field + "\"");
    }
    for (std::size_t t = 0; t < n; ++t) {
      Timestamp ts = ds.timestamp(t);
      sys_days day = floor<days>(ts);
      year_month_day ymd{day};
      double v = 0;
      if (field == "hour") v = static_cast<double>(duration_cast<hours>(ts - day).count());
      else if (field == "weekday") v = weekday{day}.c_encoding();
      else if (field == "month") v = static_cast<unsigned>(ymd.month()) - 1.0;
      else if (field == "year") v = static_cast<int>(ymd.year());
      else if (field == "holiday") v = cal.holidays.count(day) ? 1.0 : 0.0;
      else v = cal.bank_days.count(day) ? 1.0 : 0.0;
      c.set(t, v);
    }
    out = out.with_column(std::move(c));
  }
  return out;
}

}  // namespace pairexp
