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


// JSON run configuration for the pairexp command-line tool. The schema is
// documented in docs/config_schema.md.

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairexp/balance.hpp"
#include "pairexp/calendar.hpp"
#include "pairexp/design.hpp"
#include "pairexp/matching.hpp"
#include "pairexp/sensitivity.hpp"
#include "pairexp/synth.hpp"

namespace pairexp::cli {

using json = nlohmann::json;

struct EffectGrid {
  double min = 0.1;
  double max = 10.0;
  double step = 0.1;
};

struct RetrodesignTarget {
  std::string outcome;
  int offset = 0;
  std::optional<double> se;  // Neyman standard error when absent
};

struct RunConfig {
  json raw;  // as read, before command-line overrides
  std::filesystem::path base_dir;

  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> output_dir;

  // Input: a CSV file with its schema, or an in-memory synthetic series.
  std::optional<std::string> input_path;
  Schema schema;
  std::optional<SynthConfig> synthetic;

  std::optional<CalendarTable> calendar;
  TreatmentRule treatment;
  MatchSpec match;
  ExperimentDesign design;
  bool complete_case = true;

  InferenceSettings inference;
  std::vector<std::int64_t> spillover_horizons_days{1, 2, 7};

  std::vector<CovariateRef> balance_covariates;  // constrained covariates when empty
  std::size_t balance_permutations = 1000;
  std::string intervention_column;                // treatment column when empty

  std::optional<std::string> subgroup_grouping;
  std::string subgroup_intervention;
  int subgroup_offset = 0;

  GammaLadder gammas;
  Statistic sensitivity_statistic = Statistic::mean_difference;

  std::vector<RetrodesignTarget> retrodesign_targets;  // each outcome at offset 0 when empty
  EffectGrid retrodesign_effects;
  double retrodesign_alpha = 0.05;
  bool mark_half_estimate = true;

  std::optional<SynthConfig> simulate;  // for the `simulate` subcommand

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

namespace config_detail {

/// Rejects keys outside `allowed` so typos fail loudly.
inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError("config: unknown key \"" + key + "\" in " + where);
}

template <class T>
T get(const json& j, const std::string& where, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: " + where + "." + key + " has the wrong type");
  }
}

template <class T>
T need(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw ConfigError("config: " + where + "." + key + " is required");
  return get<T>(j, where, key, T{});
}

inline ColumnRole parse_role(const std::string& s) {
  if (s == "covariate") return ColumnRole::covariate;
  if (s == "outcome") return ColumnRole::outcome;
  if (s == "intervention") return ColumnRole::intervention;
  throw ConfigError("config: column role must be covariate, outcome or intervention, got \"" + s + "\"");
}

inline ColumnKind parse_kind(const std::string& s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "categorical") return ColumnKind::categorical;
  throw ConfigError("config: column kind must be numeric or categorical, got \"" + s + "\"");
}

inline Schema parse_schema(const json& j) {
  check_keys(j, "schema", {"granularity", "columns"});
  Schema s;
  s.granularity = parse_granularity(need<std::string>(j, "schema", "granularity"));
  if (!j.contains("columns") || !j.at("columns").is_array()) throw ConfigError("config: schema.columns must be an array");
  for (const auto& c : j.at("columns")) {
    check_keys(c, "schema.columns[]", {"name", "role", "kind", "units", "integral"});
    ColumnSpec spec;
    spec.name = need<std::string>(c, "schema.columns[]", "name");
    spec.role = parse_role(get<std::string>(c, "schema.columns[]", "role", "covariate"));
    spec.kind = parse_kind(get<std::string>(c, "schema.columns[]", "kind", "numeric"));
    spec.units = get<std::string>(c, "schema.columns[]", "units", "");
    spec.integral = get<bool>(c, "schema.columns[]", "integral", false);
    s.columns.push_back(std::move(spec));
  }
  return s;
}

inline json schema_to_json(const Schema& s) {
  json cols = json::array();
  for (const auto& c : s.columns) {
    json o{{"name", c.name}, {"role", std::string(to_string(c.role))}, {"kind", std::string(to_string(c.kind))}};
    if (!c.units.empty()) o["units"] = c.units;
    if (c.integral) o["integral"] = true;
    cols.push_back(std::move(o));
  }
  return json{{"granularity", std::string(to_string(s.granularity))}, {"columns", std::move(cols)}};
}

inline SynthConfig parse_synth(const json& j, const std::string& where) {
  check_keys(j, where,
             {"length", "granularity", "start", "seed", "arrival_day_prob", "second_vessel_prob", "window_start", "window_end",
              "off_window_prob", "mean_tonnage", "confounding", "outcomes", "effect", "effect_sd", "noise_sd", "noise_ar",
              "temperature_coef", "missing_rate"});
  SynthConfig c;
  c.length = get<std::size_t>(j, where, "length", c.length);
  c.granularity = parse_granularity(get<std::string>(j, where, "granularity", std::string(to_string(c.granularity))));
  c.start = get<std::string>(j, where, "start", c.start);
  c.seed = get<std::uint64_t>(j, where, "seed", c.seed);
  c.arrival_day_prob = get<double>(j, where, "arrival_day_prob", c.arrival_day_prob);
  c.second_vessel_prob = get<double>(j, where, "second_vessel_prob", c.second_vessel_prob);
  c.window_start = get<int>(j, where, "window_start", c.window_start);
  c.window_end = get<int>(j, where, "window_end", c.window_end);
  c.off_window_prob = get<double>(j, where, "off_window_prob", c.off_window_prob);
  c.mean_tonnage = get<double>(j, where, "mean_tonnage", c.mean_tonnage);
  c.confounding = get<double>(j, where, "confounding", c.confounding);
  c.outcomes = get<std::vector<std::string>>(j, where, "outcomes", c.outcomes);
  c.effect = get<double>(j, where, "effect", c.effect);
  c.effect_sd = get<double>(j, where, "effect_sd", c.effect_sd);
  c.noise_sd = get<double>(j, where, "noise_sd", c.noise_sd);
  c.noise_ar = get<double>(j, where, "noise_ar", c.noise_ar);
  c.temperature_coef = get<double>(j, where, "temperature_coef", c.temperature_coef);
  c.missing_rate = get<double>(j, where, "missing_rate", c.missing_rate);
  return c;
}

inline CalendarTable parse_calendar(const json& j) {
  check_keys(j, "calendar", {"holidays", "bank_days", "derive"});
  CalendarTable cal;
  for (const auto& d : get<std::vector<std::string>>(j, "calendar", "holidays", {})) cal.holidays.insert(parse_day(d));
  for (const auto& d : get<std::vector<std::string>>(j, "calendar", "bank_days", {})) cal.bank_days.insert(parse_day(d));
  cal.derive = get<std::vector<std::string>>(j, "calendar", "derive", cal.derive);
  return cal;
}

inline MatchSpec parse_match(const json& j) {
  check_keys(j, "match", {"max_distance_days", "same_month", "min_separation_days", "cross_pair_min_units", "constraints"});
  MatchSpec m;
  m.max_distance_days = get<double>(j, "match", "max_distance_days", m.max_distance_days);
  m.same_month = get<bool>(j, "match", "same_month", false);
  if (j.contains("min_separation_days")) m.min_separation_days = get<double>(j, "match", "min_separation_days", 0.0);
  if (j.contains("cross_pair_min_units")) m.cross_pair_min_units = get<std::int64_t>(j, "match", "cross_pair_min_units", 0);
  if (j.contains("constraints")) {
    if (!j.at("constraints").is_array()) throw ConfigError("config: match.constraints must be an array");
    for (const auto& c : j.at("constraints")) {
      const std::string w = "match.constraints[]";
      check_keys(c, w, {"column", "lag", "lags", "kind", "threshold"});
      const auto column = need<std::string>(c, w, "column");
      const auto kind_name = get<std::string>(c, w, "kind", "exact");
      ConstraintKind kind;
      if (kind_name == "exact") kind = ConstraintKind::exact;
      else if (kind_name == "caliper") kind = ConstraintKind::caliper;
      else throw ConfigError("config: constraint kind must be exact or caliper, got \"" + kind_name + "\"");
      const double threshold = get<double>(c, w, "threshold", 0.0);
      if (c.contains("lag") && c.contains("lags")) throw ConfigError("config: constraint on \"" + column + "\" sets both lag and lags");
      std::vector<int> lags = c.contains("lags") ? get<std::vector<int>>(c, w, "lags", {}) : std::vector<int>{get<int>(c, w, "lag", 0)};
      if (lags.empty()) throw ConfigError("config: constraint on \"" + column + "\" has an empty lags list");
      for (int lag : lags) m.constraints.push_back({column, lag, kind, threshold});
    }
  }
  m.validate();
  return m;
}

inline InferenceSettings parse_inference(const json& j) {
  check_keys(j, "inference", {"grid", "alpha", "draws", "exact_max_pairs", "statistics", "auto_widen"});
  InferenceSettings s;
  s.grid = SharpNullGrid(0.1, -100, 100);  // [-10, 10] in steps of 0.1
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    check_keys(g, "inference.grid", {"step", "min", "max"});
    s.grid = SharpNullGrid::covering(get<double>(g, "inference.grid", "min", -10.0), get<double>(g, "inference.grid", "max", 10.0),
                                     get<double>(g, "inference.grid", "step", 0.1));
  }
  s.alpha = get<double>(j, "inference", "alpha", s.alpha);
  if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw ConfigError("config: inference.alpha must lie in (0, 1)");
  s.randomization.draws = get<std::size_t>(j, "inference", "draws", s.randomization.draws);
  if (s.randomization.draws == 0) throw ConfigError("config: inference.draws must be positive");
  s.randomization.exact_max_pairs = get<std::size_t>(j, "inference", "exact_max_pairs", s.randomization.exact_max_pairs);
  s.auto_widen = get<bool>(j, "inference", "auto_widen", s.auto_widen);
  auto stats = get<std::vector<std::string>>(j, "inference", "statistics", {"mean_difference", "studentized"});
  s.studentized = s.wilcoxon = false;
  for (const auto& name : stats) {
    Statistic st = parse_statistic(name);
    if (st == Statistic::studentized) s.studentized = true;
    if (st == Statistic::wilcoxon_signed_rank) s.wilcoxon = true;
  }
  return s;
}

}  // namespace config_detail

/// Parses a run configuration. Relative paths resolve against `base_dir`.
inline RunConfig parse_config(const json& j, std::filesystem::path base_dir) {
  using namespace config_detail;
  check_keys(j, "config",
             {"seed", "threads", "output_dir", "input", "schema", "calendar", "treatment", "match", "analysis", "complete_case",
              "inference", "balance", "spillover", "subgroups", "sensitivity", "retrodesign", "simulate"});
  RunConfig c;
  c.raw = j;
  c.base_dir = std::move(base_dir);
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "config", "seed", 0);
  if (j.contains("threads")) c.threads = get<unsigned>(j, "config", "threads", 0);
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j, "config", "output_dir", "");

  if (j.contains("input")) {
    const auto& in = j.at("input");
    check_keys(in, "input", {"path", "synthetic"});
    if (in.contains("path") == in.contains("synthetic")) throw ConfigError("config: input needs exactly one of path or synthetic");
    if (in.contains("path")) {
      c.input_path = get<std::string>(in, "input", "path", "");
      if (!j.contains("schema")) throw ConfigError("config: schema is required with input.path");
      c.schema = parse_schema(j.at("schema"));
    } else {
      c.synthetic = parse_synth(in.at("synthetic"), "input.synthetic");
    }
  }
  if (j.contains("calendar")) c.calendar = parse_calendar(j.at("calendar"));

  if (j.contains("treatment")) {
    const auto& t = j.at("treatment");
    check_keys(t, "treatment", {"mode", "column"});
    c.treatment.mode = parse_treatment_mode(get<std::string>(t, "treatment", "mode", "positive_measure"));
    c.treatment.column = need<std::string>(t, "treatment", "column");
  }
  if (j.contains("match")) c.match = parse_match(j.at("match"));

  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    check_keys(a, "analysis", {"outcomes", "min_offset", "max_offset"});
    c.design.outcomes = need<std::vector<std::string>>(a, "analysis", "outcomes");
    c.design.min_offset = get<int>(a, "analysis", "min_offset", 0);
    c.design.max_offset = get<int>(a, "analysis", "max_offset", 0);
    c.design.validate();
  }
  c.design.rule = c.treatment;
  c.complete_case = get<bool>(j, "config", "complete_case", true);
  c.inference = parse_inference(j.value("inference", json::object()));

  if (j.contains("balance")) {
    const auto& b = j.at("balance");
    check_keys(b, "balance", {"covariates", "permutations", "intervention_column"});
    if (b.contains("covariates")) {
      for (const auto& cv : b.at("covariates")) {
        check_keys(cv, "balance.covariates[]", {"column", "lag"});
        c.balance_covariates.push_back({need<std::string>(cv, "balance.covariates[]", "column"), get<int>(cv, "balance.covariates[]", "lag", 0)});
      }
    }
    c.balance_permutations = get<std::size_t>(b, "balance", "permutations", c.balance_permutations);
    if (c.balance_permutations == 0) throw ConfigError("config: balance.permutations must be positive");
    c.intervention_column = get<std::string>(b, "balance", "intervention_column", "");
  }
  if (j.contains("spillover")) {
    const auto& s = j.at("spillover");
    check_keys(s, "spillover", {"horizons_days"});
    c.spillover_horizons_days = get<std::vector<std::int64_t>>(s, "spillover", "horizons_days", c.spillover_horizons_days);
  }
  if (j.contains("subgroups")) {
    const auto& s = j.at("subgroups");
    check_keys(s, "subgroups", {"grouping", "intervention", "offset"});
    c.subgroup_grouping = need<std::string>(s, "subgroups", "grouping");
    c.subgroup_intervention = get<std::string>(s, "subgroups", "intervention", "");
    c.subgroup_offset = get<int>(s, "subgroups", "offset", 0);
  }
  if (j.contains("sensitivity")) {
    const auto& s = j.at("sensitivity");
    check_keys(s, "sensitivity", {"gammas", "statistic"});
    if (s.contains("gammas")) c.gammas = GammaLadder(get<std::vector<double>>(s, "sensitivity", "gammas", {}));
    c.sensitivity_statistic = parse_statistic(get<std::string>(s, "sensitivity", "statistic", "mean_difference"));
    if (c.sensitivity_statistic == Statistic::studentized)
      throw ConfigError("config: sensitivity.statistic must be mean_difference or wilcoxon_signed_rank");
  }
  if (j.contains("retrodesign")) {
    const auto& r = j.at("retrodesign");
    check_keys(r, "retrodesign", {"targets", "effects", "alpha", "mark_half_estimate"});
    if (r.contains("targets")) {
      for (const auto& t : r.at("targets")) {
        check_keys(t, "retrodesign.targets[]", {"outcome", "offset", "se"});
        RetrodesignTarget target{need<std::string>(t, "retrodesign.targets[]", "outcome"), get<int>(t, "retrodesign.targets[]", "offset", 0),
                                 std::nullopt};
        if (t.contains("se")) target.se = get<double>(t, "retrodesign.targets[]", "se", 0.0);
        c.retrodesign_targets.push_back(std::move(target));
      }
    }
    if (r.contains("effects")) {
      const auto& e = r.at("effects");
      check_keys(e, "retrodesign.effects", {"min", "max", "step"});
      c.retrodesign_effects = {get<double>(e, "retrodesign.effects", "min", 0.1), get<double>(e, "retrodesign.effects", "max", 10.0),
                               get<double>(e, "retrodesign.effects", "step", 0.1)};
      const auto& g = c.retrodesign_effects;
      if (!(g.min > 0.0 && g.max >= g.min && g.step > 0.0))
        throw ConfigError("config: retrodesign.effects needs 0 < min <= max and step > 0");
    }
    c.retrodesign_alpha = get<double>(r, "retrodesign", "alpha", c.retrodesign_alpha);
    c.mark_half_estimate = get<bool>(r, "retrodesign", "mark_half_estimate", true);
  }
  if (j.contains("simulate")) c.simulate = parse_synth(j.at("simulate"), "simulate");
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open \"" + path.string() + "\"");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: \"" + path.string() + "\" is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

}  // namespace pairexp::cli
