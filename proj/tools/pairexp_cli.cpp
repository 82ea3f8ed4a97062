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


// pairexp command-line tool: builds hypothetical pairwise experiments from a
// time series and writes CSV/JSON reports plus a hashed run manifest.
//
// Exit codes: 0 success, 2 configuration error, 3 data error.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "pairexp/complete_case.hpp"
#include "pairexp/csv.hpp"
#include "pairexp/retrodesign.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace pairexp;
using pairexp::cli::json;
using pairexp::cli::RunConfig;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::string csv_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

// ---------------------------------------------------------------------------
// Run context: resolved settings and the list of files written.

struct Context {
  RunConfig cfg;
  std::string command;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  fs::path out;
  std::map<std::string, std::string> outputs;  // file -> sha256
  std::optional<std::string> dataset_hash;
  std::optional<std::size_t> pairs;

  void write(const std::string& name, const std::string& content) {
    fs::path p = out / name;
    std::ofstream f(p, std::ios::binary);
    if (!f || !f.write(content.data(), static_cast<std::streamsize>(content.size())))
      throw DataError("output: cannot write \"" + p.string() + "\"");
    outputs[name] = sha256_hex(content);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  std::string config_hash() const {
    json j = cfg.raw;
    j["seed"] = seed;
    j.erase("threads");
    j.erase("output_dir");
    return sha256_hex(j.dump());
  }

  void write_manifest() {
    json files = json::array();
    for (const auto& [name, hash] : outputs) {
      files.push_back({{"file", name}, {"sha256", hash}, {"bytes", fs::file_size(out / name)}});
    }
    json m{{"tool", "pairexp"},
           {"version", std::string(kVersion)},
           {"command", command},
           {"seed", seed},
           {"config_hash", config_hash()},
           {"dataset_hash", dataset_hash ? json(*dataset_hash) : json(nullptr)},
           {"pairs", pairs ? json(*pairs) : json(nullptr)},
           {"outputs", std::move(files)}};
    std::ofstream f(out / "manifest.json", std::ios::binary);
    if (!(f << m.dump(2) << "\n")) throw DataError("output: cannot write manifest.json");
  }
};

// ---------------------------------------------------------------------------
// Stages. Each returns its result; writers are separate so subcommands can
// recompute upstream stages without re-emitting their files.

IngestResult load(Context& ctx) {
  const auto& cfg = ctx.cfg;
  IngestResult r;
  if (cfg.input_path) {
    r = ingest_csv(cfg.resolve(*cfg.input_path).string(), cfg.schema);
  } else if (cfg.synthetic) {
    SynthConfig sc = *cfg.synthetic;
    if (!cfg.raw.at("input").at("synthetic").contains("seed")) sc.seed = derive_seed(ctx.seed, "synth");
    r.dataset = generate(sc).dataset;
    r.report.rows_read = r.report.units = r.dataset.size();
    for (std::size_t k = 0; k < r.dataset.column_count(); ++k)
      r.report.missing_cells[r.dataset.column(k).name()] = r.dataset.column(k).missing_count();
  } else {
    throw ConfigError("config: input is required (path or synthetic)");
  }
  ctx.dataset_hash = r.dataset.content_hash();
  return r;
}

void write_ingest(Context& ctx, const IngestResult& r) {
  const auto& rep = r.report;
  json gaps = json::array();
  for (const auto& g : rep.gaps)
    gaps.push_back({{"after", format_timestamp(g.after, r.dataset.granularity())},
                    {"before", format_timestamp(g.before, r.dataset.granularity())},
                    {"missing_units", g.missing_units}});
  ctx.write_json("ingest_report.json", {{"granularity", std::string(to_string(r.dataset.granularity()))},
                                        {"rows_read", rep.rows_read},
                                        {"units", rep.units},
                                        {"gap_units", rep.gap_units},
                                        {"gaps", std::move(gaps)},
                                        {"missing_cells", rep.missing_cells},
                                        {"ignored_columns", rep.ignored_columns},
                                        {"dataset_hash", r.dataset.content_hash()}});
}

LabeledDataset prepare(const Context& ctx, const TimeSeriesDataset& raw) {
  const auto& cfg = ctx.cfg;
  TimeSeriesDataset ds = cfg.calendar ? add_calendar_columns(raw, *cfg.calendar) : raw;
  if (cfg.treatment.column.empty()) throw ConfigError("config: treatment.column is required");
  if (!ds.has_column(cfg.treatment.column))
    throw ConfigError("treatment: unknown column \"" + cfg.treatment.column + "\"");
  return assign_treatment(ds, cfg.treatment);
}

MatchResult run_match(const Context& ctx, const LabeledDataset& labeled) {
  ctx.cfg.match.validate_against(labeled.data);
  return match(labeled, ctx.cfg.match, ctx.threads);
}

void write_match(Context& ctx, const LabeledDataset& labeled, const MatchResult& m) {
  const auto& ds = labeled.data;
  std::ostringstream pairs;
  write_pairs_csv(pairs, m.pairs, ds);
  ctx.write("pairs.csv", pairs.str());

  auto problems = audit_pairs(labeled, m.pairs, ctx.cfg.match);
  ctx.write_json("matching_summary.json", {{"units", labeled.counts.total},
                                           {"treated", labeled.counts.treated},
                                           {"control", labeled.counts.control},
                                           {"excluded", labeled.counts.excluded},
                                           {"excluded_missing", labeled.counts.excluded_missing},
                                           {"blocks", m.edges.blocks},
                                           {"candidate_edges", m.edges.edges.size()},
                                           {"treated_missing_constrained", m.edges.treated_missing},
                                           {"control_missing_constrained", m.edges.control_missing},
                                           {"pairs", m.pairs.size()},
                                           {"total_distance_units", m.pairs.total_distance()},
                                           {"spec_hash", m.pairs.spec_hash},
                                           {"design_dataset_hash", m.pairs.dataset_hash},
                                           {"audit_problems", problems}});

  json spill{{"pairs", m.pairs.size()}};
  if (!m.pairs.empty()) {
    std::vector<std::int64_t> horizons;
    for (auto d : ctx.cfg.spillover_horizons_days) horizons.push_back(d * ds.units_per_day());
    auto rep = spillover_report(m.pairs, horizons);
    json fr = json::array();
    for (std::size_t i = 0; i < rep.fractions.size(); ++i)
      fr.push_back({{"horizon_days", ctx.cfg.spillover_horizons_days[i]},
                    {"horizon_units", rep.fractions[i].first},
                    {"fraction_treated_near_other_control", rep.fractions[i].second}});
    spill["min_within_pair_distance_units"] = rep.min_within_pair_distance;
    spill["fractions"] = std::move(fr);
    spill["min_cross_distance_units"] = rep.min_cross_distance;
  }
  ctx.write_json("spillover.json", spill);
}

std::vector<CovariateRef> balance_covariates(const Context& ctx) {
  if (!ctx.cfg.balance_covariates.empty()) return ctx.cfg.balance_covariates;
  std::vector<CovariateRef> out;
  for (const auto& c : ctx.cfg.match.constraints) {
    bool seen = false;
    for (const auto& o : out) seen = seen || (o.column == c.column && o.lag == c.lag);
    if (!seen) out.push_back({c.column, c.lag});
  }
  return out;
}

void run_balance(Context& ctx, const LabeledDataset& labeled, const MatchResult& m) {
  const auto& ds = labeled.data;
  if (m.pairs.empty()) throw DataError("balance: no matched pairs");
  auto covs = balance_covariates(ctx);
  for (const auto& c : covs)
    if (!ds.has_column(c.column)) throw ConfigError("balance: unknown covariate \"" + c.column + "\"");
  std::ostringstream love;
  write_love_plot_csv(love, balance_report(labeled, m.pairs, covs));
  ctx.write("balance.csv", love.str());

  std::vector<CovariateRef> numeric;
  for (const auto& c : covs)
    if (ds.column(c.column).spec.kind == ColumnKind::numeric) numeric.push_back(c);
  json check{{"covariates", json::array()}, {"permutations", ctx.cfg.balance_permutations}};
  for (const auto& c : numeric) check["covariates"].push_back(c.label());
  if (!numeric.empty()) {
    auto r = randomization_check(ds, m.pairs, numeric, ctx.cfg.balance_permutations, derive_seed(ctx.seed, "balance"));
    check["observed"] = r.observed;
    check["p_value"] = r.p_value;
    check["rank"] = r.rank;
    check["pairs_used"] = r.pairs;
    check["pairs_dropped"] = r.dropped;
  }
  ctx.write_json("randomization_check.json", check);

  const std::string col = ctx.cfg.intervention_column.empty() ? ctx.cfg.treatment.column : ctx.cfg.intervention_column;
  if (!ds.has_column(col)) throw ConfigError("balance: unknown intervention column \"" + col + "\"");
  auto offsets = ctx.cfg.design.offsets();
  std::ostringstream prof;
  prof << "offset,treated_mean,control_mean,difference\n";
  for (const auto& row : intervention_profile(ds, m.pairs, col, offsets))
    prof << row.offset << ',' << csv_number(row.treated_mean) << ',' << csv_number(row.control_mean) << ','
         << csv_number(row.difference) << '\n';
  ctx.write("intervention.csv", prof.str());
}

// ---------------------------------------------------------------------------
// Estimation

struct Estimates {
  std::vector<IntervalReport> reports;              // outcome-major, offsets ascending
  std::map<std::string, CompleteCaseResult> kept;   // pair set used per outcome
};

InferenceSettings settings_for(const Context& ctx, const std::string& tag) {
  InferenceSettings s = ctx.cfg.inference;
  s.randomization.seed = derive_seed(ctx.seed, tag);
  s.randomization.threads = 1;
  return s;
}

std::string task_tag(const std::string& outcome, int offset) { return "inference/" + outcome + "/" + std::to_string(offset); }

Estimates run_estimate(const Context& ctx, const LabeledDataset& labeled, const MatchResult& m) {
  const auto& cfg = ctx.cfg;
  const auto& ds = labeled.data;
  if (cfg.design.outcomes.empty()) throw ConfigError("config: analysis.outcomes is required");
  for (const auto& y : cfg.design.outcomes) {
    const Column* c = ds.find(y);
    if (!c) throw ConfigError("analysis: unknown outcome \"" + y + "\"");
    if (c->spec.kind != ColumnKind::numeric) throw ConfigError("analysis: outcome \"" + y + "\" must be numeric");
  }
  if (m.pairs.empty()) throw DataError("estimate: no matched pairs; relax the matching constraints");
  const auto offsets = cfg.design.offsets();
  Estimates e;
  for (const auto& y : cfg.design.outcomes) {
    if (cfg.complete_case) {
      e.kept[y] = complete_case_filter(ds, m.pairs, y, offsets);
    } else {
      e.kept[y] = CompleteCaseResult{m.pairs, 0, 0.0};
    }
  }
  struct Task {
    std::string outcome;
    int offset;
  };
  std::vector<Task> tasks;
  for (const auto& y : cfg.design.outcomes)
    for (int j : offsets) tasks.push_back({y, j});
  e.reports.resize(tasks.size());
  parallel_for(tasks.size(), ctx.threads, [&](std::size_t i) {
    const auto& t = tasks[i];
    auto series = pair_differences(ds, e.kept.at(t.outcome).pairs, t.outcome, t.offset);
    e.reports[i] = analyze(series, settings_for(ctx, task_tag(t.outcome, t.offset)));
  });
  return e;
}

json fisherian_json(const FisherianResult& f) {
  return {{"statistic", std::string(to_string(f.statistic))},
          {"lower", optional_number(f.lower)},
          {"upper", optional_number(f.upper)},
          {"lower_at_grid_edge", f.lower_at_grid_edge},
          {"upper_at_grid_edge", f.upper_at_grid_edge},
          {"exact", f.exact},
          {"draws", f.draws},
          {"seed", f.seed},
          {"warnings", f.warnings},
          {"tau", f.tau},
          {"p_upper", f.p_upper},
          {"p_lower", f.p_lower}};
}

json report_json(const IntervalReport& r) {
  json j{{"outcome", r.outcome},
         {"offset", r.offset},
         {"pairs", r.pairs},
         {"excluded_pairs", r.excluded_pairs},
         {"estimate", r.estimate},
         {"alpha", r.fisherian.alpha},
         {"grid", {{"step", r.grid.step()}, {"min", r.grid.min()}, {"max", r.grid.max()}}},
         {"fisherian", fisherian_json(r.fisherian)}};
  if (r.neyman)
    j["neyman"] = {{"estimate", r.neyman->estimate}, {"variance", r.neyman->variance}, {"std_error", r.neyman->std_error},
                   {"lower", r.neyman->lower},       {"upper", r.neyman->upper}};
  if (r.studentized) j["studentized"] = fisherian_json(*r.studentized);
  if (r.wilcoxon) j["wilcoxon_signed_rank"] = fisherian_json(*r.wilcoxon);
  return j;
}

void interval_rows(std::ostream& out, const std::string& prefix, const IntervalReport& r) {
  auto row = [&](const char* name, std::optional<double> lo, std::optional<double> hi) {
    out << prefix << name << ',' << format_number(r.estimate) << ',' << csv_number(lo) << ',' << csv_number(hi) << '\n';
  };
  row("fisherian", r.fisherian.lower, r.fisherian.upper);
  if (r.neyman) row("neyman", r.neyman->lower, r.neyman->upper);
  if (r.studentized) row("studentized", r.studentized->lower, r.studentized->upper);
  if (r.wilcoxon) row("wilcoxon_signed_rank", r.wilcoxon->lower, r.wilcoxon->upper);
}

void write_estimate(Context& ctx, const LabeledDataset& labeled, const MatchResult& m, const Estimates& e) {
  json all = json::array();
  std::ostringstream csv;
  csv << "outcome,offset,estimator,point,lower,upper\n";
  for (const auto& r : e.reports) {
    all.push_back(report_json(r));
    interval_rows(csv, r.outcome + ',' + std::to_string(r.offset) + ',', r);
  }
  ctx.write_json("intervals.json", all);
  ctx.write("intervals.csv", csv.str());

  json cc = json::array();
  for (const auto& y : ctx.cfg.design.outcomes) {
    const auto& k = e.kept.at(y);
    cc.push_back({{"outcome", y}, {"pairs_kept", k.pairs.size()}, {"pairs_dropped", k.dropped}, {"dropped_fraction", k.dropped_fraction}});
  }
  ctx.write_json("complete_case.json", {{"enabled", ctx.cfg.complete_case}, {"outcomes", std::move(cc)}});

  if (!ctx.cfg.subgroup_grouping) return;
  const auto& ds = labeled.data;
  const std::string& grouping = *ctx.cfg.subgroup_grouping;
  if (!ds.has_column(grouping)) throw ConfigError("subgroups: unknown grouping covariate \"" + grouping + "\"");
  if (!ctx.cfg.subgroup_intervention.empty() && !ds.has_column(ctx.cfg.subgroup_intervention))
    throw ConfigError("subgroups: unknown intervention column \"" + ctx.cfg.subgroup_intervention + "\"");
  std::ostringstream groups, scatter;
  groups << "outcome,offset,group,pairs,estimator,point,lower,upper,note\n";
  scatter << "outcome,offset,pair,group,difference,intervention_difference\n";
  const int j = ctx.cfg.subgroup_offset;
  for (const auto& y : ctx.cfg.design.outcomes) {
    auto rep = subgroup_analysis(ds, e.kept.at(y).pairs, y, j, grouping, ctx.cfg.subgroup_intervention,
                                 settings_for(ctx, "subgroups/" + y + "/" + std::to_string(j)));
    for (const auto& g : rep.groups) {
      const std::string prefix = y + ',' + std::to_string(j) + ',' + g.group + ',' + std::to_string(g.pairs) + ',';
      if (!g.report) {
        groups << prefix << ",,,," << g.note << '\n';
        continue;
      }
      std::ostringstream rows;
      interval_rows(rows, prefix, *g.report);
      std::string line;
      std::istringstream in(rows.str());
      while (std::getline(in, line)) groups << line << ",\n";
    }
    for (const auto& s : rep.scatter)
      scatter << y << ',' << j << ',' << s.pair << ',' << s.group << ',' << format_number(s.difference) << ','
              << csv_number(s.intervention_difference) << '\n';
  }
  ctx.write("subgroups.csv", groups.str());
  ctx.write("subgroup_scatter.csv", scatter.str());
  (void)m;
}

// ---------------------------------------------------------------------------
// Sensitivity and retrodesign

void run_sensitivity(Context& ctx, const LabeledDataset& labeled, const Estimates& e) {
  std::vector<SensitivityResult> results(e.reports.size());
  parallel_for(e.reports.size(), ctx.threads, [&](std::size_t i) {
    const auto& r = e.reports[i];
    auto series = pair_differences(labeled.data, e.kept.at(r.outcome).pairs, r.outcome, r.offset);
    // Same seed as the estimate, so Gamma = 1 reproduces the reported interval.
    auto s = settings_for(ctx, task_tag(r.outcome, r.offset));
    SharpNullGrid grid = r.grid;
    auto run = [&] { return rosenbaum_intervals(series.d, grid, s.alpha, ctx.cfg.gammas, s.randomization, ctx.cfg.sensitivity_statistic); };
    auto res = run();
    for (int round = 0; s.auto_widen && round < 6; ++round) {
      bool lo = false, hi = false;
      for (const auto& g : res.intervals) {
        lo = lo || g.detail.lower_at_grid_edge;
        hi = hi || g.detail.upper_at_grid_edge;
      }
      if (!lo && !hi) break;
      const double span = grid.max() - grid.min();
      grid = grid.widened_to(lo ? grid.min() - span : grid.min(), hi ? grid.max() + span : grid.max());
      res = run();
    }
    results[i] = std::move(res);
  });

  std::ostringstream csv;
  csv << "outcome,offset,gamma,lower,upper,lower_at_grid_edge,upper_at_grid_edge\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = e.reports[i];
    for (const auto& g : results[i].intervals)
      csv << r.outcome << ',' << r.offset << ',' << format_number(g.gamma) << ',' << csv_number(g.lower) << ',' << csv_number(g.upper)
          << ',' << g.detail.lower_at_grid_edge << ',' << g.detail.upper_at_grid_edge << '\n';
  }
  ctx.write("sensitivity.csv", csv.str());

  // Placebo: outcomes before the arrival cannot respond to it.
  std::ostringstream placebo;
  placebo << "outcome,offset,point,lower,upper,excludes_zero\n";
  for (const auto& r : e.reports) {
    if (r.offset >= 0) continue;
    const auto& f = r.fisherian;
    const bool flagged = f.lower && f.upper && (*f.lower > 0.0 || *f.upper < 0.0);
    placebo << r.outcome << ',' << r.offset << ',' << format_number(r.estimate) << ',' << csv_number(f.lower) << ','
            << csv_number(f.upper) << ',' << flagged << '\n';
  }
  ctx.write("placebo.csv", placebo.str());
}

void run_retrodesign(Context& ctx, const Estimates& e) {
  const auto& cfg = ctx.cfg;
  auto targets = cfg.retrodesign_targets;
  if (targets.empty())
    for (const auto& y : cfg.design.outcomes) targets.push_back({y, 0, std::nullopt});
  std::ostringstream csv;
  csv << "outcome,offset,effect,se,power,typeS,typeM,marked\n";
  for (const auto& t : targets) {
    const IntervalReport* rep = nullptr;
    for (const auto& r : e.reports)
      if (r.outcome == t.outcome && r.offset == t.offset) rep = &r;
    if (!rep) throw ConfigError("retrodesign: target \"" + t.outcome + "\" at offset " + std::to_string(t.offset) + " is not analysed");
    double se = 0;
    if (t.se) se = *t.se;
    else if (rep->neyman) se = rep->neyman->std_error;
    if (!(se > 0.0)) throw DataError("retrodesign: standard error for \"" + t.outcome + "\" is not positive; set retrodesign.targets[].se");

    const auto& g = cfg.retrodesign_effects;
    std::vector<double> effects;
    const auto n = static_cast<std::int64_t>(std::floor((g.max - g.min) / g.step + 1e-9));
    for (std::int64_t k = 0; k <= n; ++k) effects.push_back(g.min + static_cast<double>(k) * g.step);
    std::optional<double> half;
    if (cfg.mark_half_estimate && rep->estimate > 0.0) {
      half = rep->estimate / 2.0;
      bool present = false;
      for (double x : effects) present = present || std::fabs(x - *half) <= 1e-12 * (1.0 + *half);
      if (!present) {
        effects.push_back(*half);
        std::sort(effects.begin(), effects.end());
      }
    }
    for (const auto& r : retrodesign_curve(se, cfg.retrodesign_alpha, effects, half))
      csv << t.outcome << ',' << t.offset << ',' << format_number(r.effect) << ',' << format_number(se) << ','
          << format_number(r.power) << ',' << format_number(r.type_s) << ',' << csv_number(r.type_m) << ',' << r.marked << '\n';
  }
  ctx.write("retrodesign.csv", csv.str());
}

void run_simulate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::optional<SynthConfig> sc = cfg.simulate ? cfg.simulate : cfg.synthetic;
  if (!sc) throw ConfigError("config: simulate (or input.synthetic) is required for the simulate command");
  const json& block = cfg.simulate ? cfg.raw.at("simulate") : cfg.raw.at("input").at("synthetic");
  if (!block.contains("seed")) sc->seed = derive_seed(ctx.seed, "synth");
  auto gen = generate(*sc);
  ctx.dataset_hash = gen.dataset.content_hash();
  std::ostringstream data;
  write_csv(data, gen.dataset);
  ctx.write("synthetic.csv", data.str());
  ctx.write_json("synthetic_schema.json", cli::config_detail::schema_to_json(schema_of(gen.dataset)));
  ctx.write_json("synthetic_truth.json", {{"effect", gen.truth.effect},
                                          {"arrivals", gen.truth.arrivals},
                                          {"arrivals_in_window", gen.truth.arrivals_in_window},
                                          {"seed", sc->seed}});
}

// ---------------------------------------------------------------------------

void execute(Context& ctx) {
  const std::string& cmd = ctx.command;
  if (cmd == "simulate") return run_simulate(ctx);
  auto in = load(ctx);
  if (cmd == "ingest" || cmd == "run") write_ingest(ctx, in);
  if (cmd == "ingest") return;
  auto labeled = prepare(ctx, in.dataset);
  auto m = run_match(ctx, labeled);
  ctx.pairs = m.pairs.size();
  if (cmd == "match" || cmd == "run") write_match(ctx, labeled, m);
  if (cmd == "balance" || cmd == "run") run_balance(ctx, labeled, m);
  if (cmd == "match" || cmd == "balance") return;
  auto est = run_estimate(ctx, labeled, m);
  if (cmd == "estimate" || cmd == "run") write_estimate(ctx, labeled, m, est);
  if (cmd == "sensitivity" || cmd == "run") run_sensitivity(ctx, labeled, est);
  if (cmd == "retrodesign" || cmd == "run") run_retrodesign(ctx, est);
}

unsigned parse_threads(const std::string& s, const char* source) {
  unsigned v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(std::string(source) + ": thread count must be a non-negative integer, got \"" + s + "\"");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairexp: hypothetical pairwise experiments on time series"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir, threads_flag;
  std::optional<std::uint64_t> seed_flag;
  const char* commands[][2] = {
      {"ingest", "Read and validate the input series"},
      {"match", "Build the matched pairs"},
      {"balance", "Covariate balance and randomization check"},
      {"estimate", "Fisherian and Neyman intervals per outcome and offset"},
      {"sensitivity", "Rosenbaum bounds and placebo lags"},
      {"retrodesign", "Power, type S and type M curves"},
      {"simulate", "Write a synthetic series"},
      {"run", "All stages with a full report bundle"},
  };
  for (auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--seed", seed_flag, "Root seed (overrides the configuration)");
    sub->add_option("--threads", threads_flag, "Worker threads; 0 = hardware (overrides PAIREXP_THREADS)");
    sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    Context ctx;
    ctx.command = command;
    ctx.cfg = cli::load_config(config_path);
    if (seed_flag) ctx.seed = *seed_flag;
    else if (ctx.cfg.seed) ctx.seed = *ctx.cfg.seed;
    else throw ConfigError("config: seed is required (set \"seed\" or pass --seed)");

    unsigned threads = ctx.cfg.threads.value_or(0);
    if (!threads_flag.empty()) threads = parse_threads(threads_flag, "--threads");
    else if (const char* env = std::getenv("PAIREXP_THREADS"); env && *env) threads = parse_threads(env, "PAIREXP_THREADS");
    ctx.threads = resolve_threads(threads);

    if (!out_dir.empty()) ctx.out = out_dir;
    else if (ctx.cfg.output_dir) ctx.out = ctx.cfg.resolve(*ctx.cfg.output_dir);
    else throw ConfigError("config: no output directory (set \"output_dir\" or pass --out)");
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw DataError("output: cannot create \"" + ctx.out.string() + "\": " + ec.message());

    execute(ctx);
    ctx.write_manifest();
    std::cerr << "pairexp " << command << ": wrote " << ctx.outputs.size() + 1 << " files to " << ctx.out.string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "pairexp " << command << ": configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "pairexp " << command << ": configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const GridRangeError& e) {
    std::cerr << "pairexp " << command << ": configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "pairexp " << command << ": data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "pairexp " << command << ": error: " << e.what() << '\n';
    return 1;
  }
}
