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

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pairexp/common.hpp"

namespace pairexp {

// ---------------------------------------------------------------------------
// Time. Timestamps are naive local times; the sys_clock epoch is only used as
// a calendar origin, no time-zone arithmetic is ever applied.

using Timestamp = std::chrono::sys_seconds;

enum class Granularity { hourly, daily };

inline std::int64_t step_seconds(Granularity g) { return g == Granularity::hourly ? 3600 : 86400; }
inline std::int64_t units_per_day(Granularity g) { return g == Granularity::hourly ? 24 : 1; }

inline std::string_view to_string(Granularity g) { return g == Granularity::hourly ? "hourly" : "daily"; }

inline Granularity parse_granularity(std::string_view s) {
  if (s == "hourly") return Granularity::hourly;
  if (s == "daily") return Granularity::daily;
  throw ConfigError("granularity must be \"hourly\" or \"daily\", got \"" + std::string(s) + "\"");
}

/// Parses YYYY-MM-DD, YYYY-MM-DDTHH:MM[:SS] or YYYY-MM-DD HH:MM[:SS].
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
    if (pos + n > s.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto y = digits(0, 4), mo = digits(5, 2), d = digits(8, 2);
  if (!y || !mo || !d) return std::nullopt;
  year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  if (s.size() > 10) {
    if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
    auto h = digits(11, 2);
    if (!h || s.size() < 16 || s[13] != ':') return std::nullopt;
    auto m = digits(14, 2);
    if (!m) return std::nullopt;
    hh = *h;
    mm = *m;
    if (s.size() > 16) {
      if (s.size() != 19 || s[16] != ':') return std::nullopt;
      auto sec = digits(17, 2);
      if (!sec) return std::nullopt;
      ss = *sec;
    }
    if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  }
  return Timestamp{sys_days{ymd}.time_since_epoch() + hours{hh} + minutes{mm} + seconds{ss}};
}

inline std::string format_timestamp(Timestamp ts, Granularity g) {
  using namespace std::chrono;
  auto day_point = floor<days>(ts);
  year_month_day ymd{day_point};
  hh_mm_ss hms{ts - day_point};
  char buf[32];
  if (g == Granularity::daily && hms.to_duration().count() == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Schema

enum class ColumnKind { numeric, categorical };
enum class ColumnRole { covariate, outcome, intervention };

inline std::string_view to_string(ColumnKind k) { return k == ColumnKind::numeric ? "numeric" : "categorical"; }
inline std::string_view to_string(ColumnRole r) {
  switch (r) {
    case ColumnRole::covariate: return "covariate";
    case ColumnRole::outcome: return "outcome";
    case ColumnRole::intervention: return "intervention";
  }
  return "?";
}

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::covariate;
  ColumnKind kind = ColumnKind::numeric;
  std::string units;      // e.g. "ug/m3" for outcomes
  bool integral = false;  // intervention counts (vessel arrivals)
};

struct Schema {
  Granularity granularity = Granularity::hourly;
  std::vector<ColumnSpec> columns;
};

/// One dataset column. Missingness lives in `observed`; `values` at a missing
/// cell is unspecified and never read. Categorical cells store the index of
/// their label in `levels`.
struct Column {
  ColumnSpec spec;
  std::vector<double> values;
  std::vector<std::uint8_t> observed;
  std::vector<std::uint8_t> imputed;
  std::vector<std::string> levels;

  std::size_t size() const { return values.size(); }
  const std::string& name() const { return spec.name; }

  bool is_observed(std::ptrdiff_t t) const {
    return t >= 0 && static_cast<std::size_t>(t) < values.size() && observed[static_cast<std::size_t>(t)] != 0;
  }
  bool is_imputed(std::ptrdiff_t t) const {
    return t >= 0 && static_cast<std::size_t>(t) < values.size() && imputed[static_cast<std::size_t>(t)] != 0;
  }
  std::optional<double> at(std::ptrdiff_t t) const {
    if (!is_observed(t)) return std::nullopt;
    return values[static_cast<std::size_t>(t)];
  }
  std::size_t missing_count() const {
    std::size_t n = 0;
    for (auto o : observed) n += (o == 0);
    return n;
  }
  /// Label text for a categorical cell, or the number printed in shortest form.
  std::string render(std::size_t t) const;

  /// Index of `label`, appending it if new.
  int intern(std::string_view label) {
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (levels[i] == label) return static_cast<int>(i);
    levels.emplace_back(label);
    return static_cast<int>(levels.size() - 1);
  }

  static Column empty(ColumnSpec spec, std::size_t n) {
    Column c;
    c.spec = std::move(spec);
    c.values.assign(n, 0.0);
    c.observed.assign(n, 0);
    c.imputed.assign(n, 0);
    return c;
  }
  void set(std::size_t t, double v) {
    values[t] = v;
    observed[t] = 1;
  }
};

/// Shortest decimal text that round-trips to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string Column::render(std::size_t t) const {
  if (!observed[t]) return {};
  if (spec.kind == ColumnKind::categorical) return levels.at(static_cast<std::size_t>(values[t]));
  return format_number(values[t]);
}

// ---------------------------------------------------------------------------
// Dataset

/// Ordered, uniformly spaced units carrying covariates, outcomes and
/// intervention measures. Immutable once built; columns are shared between
/// derived datasets, so copies are cheap.
class TimeSeriesDataset {
 public:
  TimeSeriesDataset() = default;

  /// Validates every invariant; throws DataError on violation.
  TimeSeriesDataset(Granularity granularity, std::vector<Timestamp> timestamps, std::vector<Column> columns,
                    std::vector<std::uint8_t> present = {})
      : granularity_(granularity), timestamps_(std::make_shared<const std::vector<Timestamp>>(std::move(timestamps))) {
    const std::size_t n = timestamps_->size();
    if (present.empty()) present.assign(n, 1);
    if (present.size() != n) throw DataError("dataset: presence mask length mismatch");
    present_ = std::make_shared<const std::vector<std::uint8_t>>(std::move(present));
    const auto step = std::chrono::seconds{step_seconds(granularity)};
    for (std::size_t t = 1; t < n; ++t) {
      if ((*timestamps_)[t] - (*timestamps_)[t - 1] != step)
        throw DataError("dataset: timestamps not uniformly spaced at " + format_timestamp((*timestamps_)[t], granularity));
    }
    for (auto& c : columns) add(std::make_shared<const Column>(std::move(c)));
  }

  Granularity granularity() const { return granularity_; }
  std::size_t size() const { return timestamps_ ? timestamps_->size() : 0; }
  Timestamp timestamp(std::size_t t) const { return (*timestamps_)[t]; }
  std::span<const Timestamp> timestamps() const { return *timestamps_; }
  /// False for units inserted to fill a gap in the input file.
  bool present(std::size_t t) const { return (*present_)[t] != 0; }
  std::int64_t units_per_day() const { return pairexp::units_per_day(granularity_); }

  std::size_t column_count() const { return columns_.size(); }
  const Column& column(std::size_t i) const { return *columns_[i]; }
  bool has_column(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }
  const Column* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : columns_[it->second].get();
  }
  const Column& column(std::string_view name) const {
    if (auto* c = find(name)) return *c;
    throw ConfigError("unknown column \"" + std::string(name) + "\"");
  }

  /// New dataset sharing this one's columns plus `extra`.
  TimeSeriesDataset with_column(Column extra) const {
    TimeSeriesDataset out = *this;
    out.add(std::make_shared<const Column>(std::move(extra)));
    return out;
  }

  /// SHA-256 over timestamps and every cell (values, missingness, imputation).
  std::string content_hash() const {
    Sha256 h;
    h.update(to_string(granularity_));
    for (auto ts : *timestamps_) h.update_pod(ts.time_since_epoch().count());
    h.update(present_->data(), present_->size());
    for (const auto& c : columns_) {
      h.update(c->name());
      h.update(to_string(c->spec.kind));
      // Categorical cells hash their label, so level order does not matter.
      const bool cat = c->spec.kind == ColumnKind::categorical;
      for (std::size_t t = 0; t < c->size(); ++t) {
        h.update_pod(c->observed[t]);
        h.update_pod(c->imputed[t]);
        if (!c->observed[t]) continue;
        if (cat) h.update(c->render(t) + "\x1f");
        else h.update_pod(c->values[t]);
      }
    }
    return h.hex();
  }

 private:
  void add(std::shared_ptr<const Column> c) {
    if (c->values.size() != size() || c->observed.size() != size() || c->imputed.size() != size())
      throw DataError("dataset: column \"" + c->name() + "\" has wrong length");
    if (index_.count(c->name())) throw DataError("dataset: duplicate column \"" + c->name() + "\"");
    if (c->spec.role == ColumnRole::intervention) {
      for (std::size_t t = 0; t < size(); ++t) {
        if (!c->observed[t]) continue;
        double v = c->values[t];
        if (!(v >= 0.0))
          throw DataError("dataset: negative intervention value in \"" + c->name() + "\" at " +
                          format_timestamp(timestamp(t), granularity_));
        if (c->spec.integral && v != std::floor(v))
          throw DataError("dataset: non-integral count in \"" + c->name() + "\" at " +
                          format_timestamp(timestamp(t), granularity_));
      }
    }
    index_.emplace(c->name(), columns_.size());
    columns_.push_back(std::move(c));
  }

  Granularity granularity_ = Granularity::hourly;
  std::shared_ptr<const std::vector<Timestamp>> timestamps_ = std::make_shared<const std::vector<Timestamp>>();
  std::shared_ptr<const std::vector<std::uint8_t>> present_ = std::make_shared<const std::vector<std::uint8_t>>();
  std::vector<std::shared_ptr<const Column>> columns_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Lag / lead views

/// Name of the derived column holding `base` shifted by `offset`.
inline std::string lag_column_name(std::string_view base, int offset) {
  if (offset < 0) return std::string(base) + "_lag" + std::to_string(-offset);
  if (offset > 0) return std::string(base) + "_lead" + std::to_string(offset);
  return std::string(base) + "_t0";
}

/// Column whose value at t is base[t + offset]; missing when out of range.
inline Column shifted_column(const Column& base, int offset, std::string name) {
  const auto n = static_cast<std::ptrdiff_t>(base.size());
  ColumnSpec spec = base.spec;
  spec.name = std::move(name);
  Column c = Column::empty(std::move(spec), base.size());
  c.levels = base.levels;
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    std::ptrdiff_t src = t + offset;
    if (src < 0 || src >= n) continue;
    auto s = static_cast<std::size_t>(src);
    c.values[static_cast<std::size_t>(t)] = base.values[s];
    c.observed[static_cast<std::size_t>(t)] = base.observed[s];
    c.imputed[static_cast<std::size_t>(t)] = base.imputed[s];
  }
  return c;
}

/// Appends one derived column per offset (negative = lag, positive = lead).
inline TimeSeriesDataset with_lags(const TimeSeriesDataset& ds, std::string_view column, std::span<const int> offsets) {
  const Column& base = ds.column(column);
  if (offsets.empty()) throw ParameterError("with_lags: offsets must be nonempty");
  TimeSeriesDataset out = ds;
  for (int j : offsets) out = out.with_column(shifted_column(base, j, lag_column_name(column, j)));
  return out;
}

}  // namespace pairexp
