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
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pairexp/dataset.hpp"

namespace pairexp {

/// Suffix of the optional per-cell imputation flag column (values 0/1).
inline constexpr std::string_view kImputedSuffix = "__imputed";

struct Gap {
  Timestamp after;    // last timestamp before the gap
  Timestamp before;   // first timestamp after the gap
  std::size_t missing_units = 0;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t units = 0;
  std::size_t gap_units = 0;
  std::vector<Gap> gaps;
  std::map<std::string, std::size_t> missing_cells;
  std::vector<std::string> ignored_columns;
};

struct IngestResult {
  TimeSeriesDataset dataset;
  IngestReport report;
};

namespace csv_detail {

/// Splits one CSV record. Handles double-quoted fields with "" escapes.
inline std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string quote(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace csv_detail

/// Reads a CSV with a `timestamp` column and the schema's columns. Empty cells
/// are missing. Gaps in the time index become fully missing units and are
/// listed in the report; duplicate or decreasing timestamps are rejected.
inline IngestResult ingest_csv(std::istream& in, const Schema& schema) {
  using namespace csv_detail;
  std::string line;
  if (!std::getline(in, line)) throw DataError("ingest: empty input, header row expected");
  auto header = split_record(line);
  for (auto& h : header) h = std::string(trim(h));

  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!position.emplace(header[i], i).second) throw DataError("ingest: duplicate header column \"" + header[i] + "\"");
  }
  if (!position.count("timestamp")) throw DataError("ingest: header has no \"timestamp\" column");

  struct Binding {
    std::size_t value_pos;
    std::optional<std::size_t> imputed_pos;
  };
  std::vector<Binding> bindings;
  for (const auto& spec : schema.columns) {
    auto it = position.find(spec.name);
    if (it == position.end()) throw DataError("ingest: header is missing schema column \"" + spec.name + "\"");
    Binding b{it->second, std::nullopt};
    if (auto imp = position.find(spec.name + std::string(kImputedSuffix)); imp != position.end()) b.imputed_pos = imp->second;
    bindings.push_back(b);
  }

  IngestReport report;
  {
    std::vector<std::uint8_t> used(header.size(), 0);
    used[position["timestamp"]] = 1;
    for (auto& b : bindings) {
      used[b.value_pos] = 1;
      if (b.imputed_pos) used[*b.imputed_pos] = 1;
    }
    for (std::size_t i = 0; i < header.size(); ++i)
      if (!used[i]) report.ignored_columns.push_back(header[i]);
  }

  const std::size_t ts_pos = position["timestamp"];
  const auto step = std::chrono::seconds{step_seconds(schema.granularity)};
  const Granularity g = schema.granularity;

  std::vector<Timestamp> stamps;
  std::vector<std::uint8_t> present;
  std::vector<Column> columns;
  for (const auto& spec : schema.columns) columns.push_back(Column::empty(spec, 0));

  auto append_missing_unit = [&](Timestamp ts) {
    stamps.push_back(ts);
    present.push_back(0);
    for (auto& c : columns) {
      c.values.push_back(0.0);
      c.observed.push_back(0);
      c.imputed.push_back(0);
    }
  };

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_record(line);
    if (fields.size() != header.size())
      throw DataError("ingest: line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()));
    auto ts_text = trim(fields[ts_pos]);
    auto ts = parse_timestamp(ts_text);
    if (!ts) throw DataError("ingest: line " + std::to_string(line_no) + ": unparseable timestamp \"" + std::string(ts_text) + "\"");
    if (!stamps.empty()) {
      Timestamp last = stamps.back();
      if (*ts == last) throw DataError("ingest: duplicate timestamp " + format_timestamp(*ts, g));
      if (*ts < last)
        throw DataError("ingest: timestamp " + format_timestamp(*ts, g) + " is earlier than its predecessor " +
                        format_timestamp(last, g));
      auto diff = *ts - last;
      if (diff % step != std::chrono::seconds{0})
        throw DataError("ingest: timestamp " + format_timestamp(*ts, g) + " is off the " + std::string(to_string(g)) + " grid");
      if (diff > step) {
        Gap gap{last, *ts, static_cast<std::size_t>(diff / step) - 1};
        for (Timestamp fill = last + step; fill < *ts; fill += step) append_missing_unit(fill);
        report.gap_units += gap.missing_units;
        report.gaps.push_back(gap);
      }
    }
    stamps.push_back(*ts);
    present.push_back(1);
    for (std::size_t k = 0; k < columns.size(); ++k) {
      Column& c = columns[k];
      auto cell = trim(fields[bindings[k].value_pos]);
      bool obs = !cell.empty();
      double v = 0.0;
      if (obs) {
        if (c.spec.kind == ColumnKind::categorical) {
          v = c.intern(cell);
        } else if (!parse_double(cell, v)) {
          throw DataError("ingest: line " + std::to_string(line_no) + ": column \"" + c.name() + "\" has non-numeric value \"" +
                          std::string(cell) + "\"");
        }
      }
      std::uint8_t imp = 0;
      if (bindings[k].imputed_pos) {
        auto flag = trim(fields[*bindings[k].imputed_pos]);
        imp = (flag == "1" || flag == "true" || flag == "TRUE") ? 1 : 0;
      }
      c.values.push_back(v);
      c.observed.push_back(obs ? 1 : 0);
      c.imputed.push_back(imp);
    }
    ++report.rows_read;
  }
  report.units = stamps.size();
  for (const auto& c : columns) report.missing_cells[c.name()] = c.missing_count();
  return {TimeSeriesDataset(g, std::move(stamps), std::move(columns), std::move(present)), std::move(report)};
}

inline IngestResult ingest_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("ingest: cannot open \"" + path + "\"");
  return ingest_csv(in, schema);
}

/// Writes the dataset in the ingestion format. Gap-filled units are skipped,
/// imputation flag columns are emitted only for columns that carry a flag.
inline void write_csv(std::ostream& out, const TimeSeriesDataset& ds) {
  using csv_detail::quote;
  std::vector<std::uint8_t> has_flags(ds.column_count(), 0);
  out << "timestamp";
  for (std::size_t k = 0; k < ds.column_count(); ++k) {
    const Column& c = ds.column(k);
    out << ',' << quote(c.name());
    for (auto f : c.imputed) {
      if (f) {
        has_flags[k] = 1;
        break;
      }
    }
  }
  for (std::size_t k = 0; k < ds.column_count(); ++k)
    if (has_flags[k]) out << ',' << quote(ds.column(k).name() + std::string(kImputedSuffix));
  out << '\n';
  for (std::size_t t = 0; t < ds.size(); ++t) {
    if (!ds.present(t)) continue;
    out << format_timestamp(ds.timestamp(t), ds.granularity());
    for (std::size_t k = 0; k < ds.column_count(); ++k) out << ',' << quote(ds.column(k).render(t));
    for (std::size_t k = 0; k < ds.column_count(); ++k)
      if (has_flags[k]) out << ',' << (ds.column(k).imputed[t] ? '1' : '0');
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const TimeSeriesDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write \"" + path + "\"");
  write_csv(out, ds);
}

/// Schema describing every column of `ds`, suitable for re-ingesting its CSV.
inline Schema schema_of(const TimeSeriesDataset& ds) {
  Schema s;
  s.granularity = ds.granularity();
  for (std::size_t k = 0; k < ds.column_count(); ++k) s.columns.push_back(ds.column(k).spec);
  return s;
}

}  // namespace pairexp
