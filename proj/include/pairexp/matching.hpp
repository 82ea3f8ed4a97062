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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pairexp/design.hpp"

namespace pairexp {

// ---------------------------------------------------------------------------
// Constraints

enum class ConstraintKind { exact, caliper };

/// |X_treated - X_control| <= threshold on `column` read at t + lag.
/// Exact constraints require equality (threshold 0).
struct CovariateConstraint {
  std::string column;
  int lag = 0;
  ConstraintKind kind = ConstraintKind::exact;
  double threshold = 0.0;

  std::string label() const { return lag == 0 ? column : lag_column_name(column, lag); }
};

struct MatchSpec {
  std::vector<CovariateConstraint> constraints;
  double max_distance_days = 30.0;
  bool same_month = false;                       // same month of the year
  std::optional<double> min_separation_days;     // within-pair lower bound
  std::optional<std::int64_t> cross_pair_min_units;  // off by default

  void validate() const {
    if (!(max_distance_days > 0.0)) throw ConfigError("match: max_distance_days must be positive");
    if (min_separation_days && (*min_separation_days < 0.0 || *min_separation_days > max_distance_days))
      throw ConfigError("match: min_separation_days must lie in [0, max_distance_days]");
    if (cross_pair_min_units && *cross_pair_min_units <= 0)
      throw ConfigError("match: cross_pair_min_units must be positive");
    for (const auto& c : constraints) {
      if (c.kind == ConstraintKind::caliper && !(c.threshold > 0.0))
        throw ConfigError("match: caliper threshold for \"" + c.label() + "\" must be strictly positive");
      if (c.kind == ConstraintKind::exact && c.threshold != 0.0)
        throw ConfigError("match: exact constraint on \"" + c.label() + "\" must have threshold 0");
    }
  }

  /// Checks every constrained column exists; names the first unknown one.
  void validate_against(const TimeSeriesDataset& ds) const {
    validate();
    for (const auto& c : constraints) {
      const Column* col = ds.find(c.column);
      if (!col) throw ConfigError("match: unknown covariate \"" + c.column + "\"");
      if (col->spec.kind == ColumnKind::categorical && c.kind == ConstraintKind::caliper)
        throw ConfigError("match: caliper constraint on categorical covariate \"" + c.column + "\"");
    }
  }

  std::string canonical() const {
    std::ostringstream os;
    os << "max_distance_days=" << format_number(max_distance_days) << ";same_month=" << same_month
       << ";min_sep=" << (min_separation_days ? format_number(*min_separation_days) : "-")
       << ";cross=" << (cross_pair_min_units ? std::to_string(*cross_pair_min_units) : "-");
    for (const auto& c : constraints)
      os << ";" << c.column << "@" << c.lag << ":" << (c.kind == ConstraintKind::exact ? "exact" : "caliper") << ":"
         << format_number(c.threshold);
    return os.str();
  }
  std::string hash() const { return sha256_hex(canonical()); }
};

namespace matching_detail {

inline bool within(double a, double b, double threshold) {
  return std::fabs(a - b) <= threshold + 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline std::int64_t to_units(double days, const TimeSeriesDataset& ds) {
  return static_cast<std::int64_t>(std::floor(days * static_cast<double>(ds.units_per_day()) + 1e-9));
}

}  // namespace matching_detail

/// MatchSpec bound to a dataset: columns resolved, day bounds converted to
/// unit counts. Cheap to query from many threads.
class EligibilityRule {
 public:
  struct Bound {
    const Column* column;
    int lag;
    bool exact;
    double threshold;
  };

  EligibilityRule(const TimeSeriesDataset& ds, const MatchSpec& spec) : ds_(&ds) {
    spec.validate_against(ds);
    max_units_ = matching_detail::to_units(spec.max_distance_days, ds);
    min_units_ = spec.min_separation_days ? matching_detail::to_units(*spec.min_separation_days, ds) : 0;
    same_month_ = spec.same_month;
    for (const auto& c : spec.constraints)
      bounds_.push_back({&ds.column(c.column), c.lag, c.kind == ConstraintKind::exact, c.threshold});
  }

  std::int64_t max_units() const { return max_units_; }
  std::int64_t min_units() const { return min_units_; }
  const std::vector<Bound>& bounds() const { return bounds_; }

  /// True when every constrained value of unit t is observed.
  bool observed(std::size_t t) const {
    for (const auto& b : bounds_)
      if (!b.column->is_observed(static_cast<std::ptrdiff_t>(t) + b.lag)) return false;
    return true;
  }

  double value(const Bound& b, std::size_t t) const {
    return b.column->values[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + b.lag)];
  }

  unsigned month_of(std::size_t t) const {
    std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(ds_->timestamp(t))};
    return static_cast<unsigned>(ymd.month());
  }

  bool temporal_ok(std::size_t a, std::size_t b) const {
    auto d = a > b ? static_cast<std::int64_t>(a - b) : static_cast<std::int64_t>(b - a);
    if (d > max_units_ || d < min_units_ || d == 0) return false;
    return !same_month_ || month_of(a) == month_of(b);
  }

  /// Covariate part only; both units must be observed().
  bool covariates_ok(std::size_t a, std::size_t b) const {
    for (const auto& bd : bounds_) {
      double x = value(bd, a), y = value(bd, b);
      if (bd.exact ? x != y : !matching_detail::within(x, y, bd.threshold)) return false;
    }
    return true;
  }

  bool eligible(std::size_t treated, std::size_t control) const {
    return observed(treated) && observed(control) && temporal_ok(treated, control) && covariates_ok(treated, control);
  }

 private:
  const TimeSeriesDataset* ds_;
  std::int64_t max_units_ = 0;
  std::int64_t min_units_ = 0;
  bool same_month_ = false;
  std::vector<Bound> bounds_;
};

/// Whether the two units may form a pair. Missing constrained values make the
/// pair ineligible, never an error.
inline bool eligible(const TimeSeriesDataset& ds, std::size_t treated, std::size_t control, const MatchSpec& spec) {
  return EligibilityRule(ds, spec).eligible(treated, control);
}

// ---------------------------------------------------------------------------
// Candidate generation

struct Edge {
  std::size_t treated;
  std::size_t control;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct EdgeList {
  std::vector<Edge> edges;                // sorted by (treated, control)
  std::size_t treated_missing = 0;        // treated units dropped for missing constrained values
  std::size_t control_missing = 0;
  std::size_t blocks = 0;
};

/// All eligible (treated, control) edges. Units are blocked on the values of
/// their exact constraints (and month when required); inside a block, controls
/// are scanned only within the temporal window of each treated unit.
inline EdgeList candidate_edges(const LabeledDataset& labeled, const MatchSpec& spec, unsigned threads = 1) {
  const EligibilityRule rule(labeled.data, spec);
  struct Block {
    std::vector<std::size_t> treated, controls;
  };
  std::map<std::vector<double>, Block> blocks;
  EdgeList out;
  std::vector<double> key;
  for (std::size_t t = 0; t < labeled.data.size(); ++t) {
    Arm arm = labeled.arms[t];
    if (arm == Arm::excluded) continue;
    if (!rule.observed(t)) {
      ++(arm == Arm::treated ? out.treated_missing : out.control_missing);
      continue;
    }
    key.clear();
    for (const auto& b : rule.bounds())
      if (b.exact) key.push_back(rule.value(b, t));
    if (spec.same_month) key.push_back(rule.month_of(t));
    auto& blk = blocks[key];
    (arm == Arm::treated ? blk.treated : blk.controls).push_back(t);
  }
  std::vector<const Block*> work;
  for (const auto& [k, b] : blocks)
    if (!b.treated.empty() && !b.controls.empty()) work.push_back(&b);
  out.blocks = blocks.size();

  std::vector<std::vector<Edge>> found(work.size());
  const auto window = static_cast<std::size_t>(rule.max_units());
  parallel_for(work.size(), threads, [&](std::size_t i) {
    const Block& b = *work[i];
    auto& local = found[i];
    for (std::size_t t : b.treated) {
      std::size_t lo = t > window ? t - window : 0;
      auto it = std::lower_bound(b.controls.begin(), b.controls.end(), lo);
      for (; it != b.controls.end() && *it <= t + window; ++it) {
        if (rule.temporal_ok(t, *it) && rule.covariates_ok(t, *it)) local.push_back({t, *it});
      }
    }
  });
  for (auto& f : found) out.edges.insert(out.edges.end(), f.begin(), f.end());
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

// ---------------------------------------------------------------------------
// Matching

struct MatchedPair {
  std::size_t treated;
  std::size_t control;
  std::int64_t distance() const {
    return treated > control ? static_cast<std::int64_t>(treated - control) : static_cast<std::int64_t>(control - treated);
  }
  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

/// The designed experiment: disjoint treated/control pairs, ordered by
/// treated unit.
struct MatchedPairSet {
  std::vector<MatchedPair> pairs;
  std::string spec_hash;
  std::string dataset_hash;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  std::int64_t total_distance() const {
    std::int64_t s = 0;
    for (const auto& p : pairs) s += p.distance();
    return s;
  }
};

namespace matching_detail {

/// Hopcroft-Karp on a compressed bipartite graph. Left vertices are treated
/// units, right vertices controls; adjacency lists are pre-sorted by
/// preference so the result is deterministic.
class HopcroftKarp {
 public:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  HopcroftKarp(std::size_t n_left, std::size_t n_right, const std::vector<std::vector<std::size_t>>& adj)
      : adj_(adj), match_left_(n_left, kNone), match_right_(n_right, kNone), dist_(n_left) {}

  void run() {
    while (bfs()) {
      it_.assign(match_left_.size(), 0);
      for (std::size_t u = 0; u < match_left_.size(); ++u)
        if (match_left_[u] == kNone) dfs(u);
    }
  }

  std::vector<std::size_t>& match_left() { return match_left_; }
  std::vector<std::size_t>& match_right() { return match_right_; }

 private:
  bool bfs() {
    std::vector<std::size_t> queue;
    queue.reserve(match_left_.size());
    bool found = false;
    for (std::size_t u = 0; u < match_left_.size(); ++u) {
      if (match_left_[u] == kNone) {
        dist_[u] = 0;
        queue.push_back(u);
      } else {
        dist_[u] = kNone;
      }
    }
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      std::size_t u = queue[qi];
      for (std::size_t v : adj_[u]) {
        std::size_t w = match_right_[v];
        if (w == kNone) {
          found = true;
        } else if (dist_[w] == kNone) {
          dist_[w] = dist_[u] + 1;
          queue.push_back(w);
        }
      }
    }
    return found;
  }

  bool dfs(std::size_t u) {
    for (; it_[u] < adj_[u].size(); ++it_[u]) {
      std::size_t v = adj_[u][it_[u]];
      std::size_t w = match_right_[v];
      if (w == kNone || (dist_[w] == dist_[u] + 1 && dfs(w))) {
        match_left_[u] = v;
        match_right_[v] = u;
        ++it_[u];
        return true;
      }
    }
    dist_[u] = kNone;
    return false;
  }

  const std::vector<std::vector<std::size_t>>& adj_;
  std::vector<std::size_t> match_left_, match_right_, dist_, it_;
};

}  // namespace matching_detail

/// Maximum-cardinality one-to-one matching over the edge list, followed by a
/// swap refinement that lowers total |treated - control| distance without
/// changing cardinality. Each refinement move either moves a treated unit to
/// a closer free control or exchanges controls between two pairs; every move
/// strictly lowers the total, so the loop reaches a fixed point.
inline MatchedPairSet maximum_matching(const EdgeList& list) {
  using matching_detail::HopcroftKarp;
  constexpr std::size_t kNone = HopcroftKarp::kNone;

  std::vector<std::size_t> left_ids, right_ids;
  for (const auto& e : list.edges) {
    left_ids.push_back(e.treated);
    right_ids.push_back(e.control);
  }
  std::sort(left_ids.begin(), left_ids.end());
  left_ids.erase(std::unique(left_ids.begin(), left_ids.end()), left_ids.end());
  std::sort(right_ids.begin(), right_ids.end());
  right_ids.erase(std::unique(right_ids.begin(), right_ids.end()), right_ids.end());
  auto left_of = [&](std::size_t id) { return static_cast<std::size_t>(std::lower_bound(left_ids.begin(), left_ids.end(), id) - left_ids.begin()); };
  auto right_of = [&](std::size_t id) { return static_cast<std::size_t>(std::lower_bound(right_ids.begin(), right_ids.end(), id) - right_ids.begin()); };

  auto dist = [&](std::size_t u, std::size_t v) {
    std::size_t a = left_ids[u], b = right_ids[v];
    return a > b ? static_cast<std::int64_t>(a - b) : static_cast<std::int64_t>(b - a);
  };

  std::vector<std::vector<std::size_t>> by_pref(left_ids.size()), by_id(left_ids.size());
  for (const auto& e : list.edges) {
    std::size_t u = left_of(e.treated), v = right_of(e.control);
    by_pref[u].push_back(v);
    by_id[u].push_back(v);
  }
  for (std::size_t u = 0; u < by_pref.size(); ++u) {
    auto& a = by_pref[u];
    std::stable_sort(a.begin(), a.end(), [&](std::size_t x, std::size_t y) { return dist(u, x) < dist(u, y); });
    std::sort(by_id[u].begin(), by_id[u].end());
  }
  auto has_edge = [&](std::size_t u, std::size_t v) { return std::binary_search(by_id[u].begin(), by_id[u].end(), v); };

  HopcroftKarp hk(left_ids.size(), right_ids.size(), by_pref);
  hk.run();
  auto& ml = hk.match_left();
  auto& mr = hk.match_right();

  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t u = 0; u < ml.size(); ++u) {
      std::size_t v = ml[u];
      if (v == kNone) continue;
      const std::int64_t current = dist(u, v);
      for (std::size_t v2 : by_pref[u]) {
        const std::int64_t d2 = dist(u, v2);
        if (d2 >= current) break;
        std::size_t u2 = mr[v2];
        if (u2 == kNone) {
          mr[v] = kNone;
          ml[u] = v2;
          mr[v2] = u;
          changed = true;
          break;
        }
        if (has_edge(u2, v) && d2 + dist(u2, v) < current + dist(u2, v2)) {
          ml[u] = v2;
          mr[v2] = u;
          ml[u2] = v;
          mr[v] = u2;
          changed = true;
          break;
        }
      }
    }
  }

  MatchedPairSet out;
  for (std::size_t u = 0; u < ml.size(); ++u)
    if (ml[u] != kNone) out.pairs.push_back({left_ids[u], right_ids[ml[u]]});
  return out;
}

/// Drops pairs, scanning in treated order, until no kept treated unit lies
/// within `min_units` of another kept pair's control (and vice versa).
inline MatchedPairSet enforce_cross_pair_separation(const MatchedPairSet& in, std::int64_t min_units) {
  MatchedPairSet out = in;
  out.pairs.clear();
  auto gap = [](std::size_t a, std::size_t b) {
    return a > b ? static_cast<std::int64_t>(a - b) : static_cast<std::int64_t>(b - a);
  };
  for (const auto& p : in.pairs) {
    bool ok = true;
    for (const auto& q : out.pairs) {
      if (gap(p.treated, q.control) < min_units || gap(q.treated, p.control) < min_units) {
        ok = false;
        break;
      }
    }
    if (ok) out.pairs.push_back(p);
  }
  return out;
}

struct MatchResult {
  MatchedPairSet pairs;
  EdgeList edges;
};

/// Candidate generation, matching, optional cross-pair separation, provenance.
inline MatchResult match(const LabeledDataset& labeled, const MatchSpec& spec, unsigned threads = 1) {
  MatchResult r;
  r.edges = candidate_edges(labeled, spec, threads);
  r.pairs = maximum_matching(r.edges);
  if (spec.cross_pair_min_units) r.pairs = enforce_cross_pair_separation(r.pairs, *spec.cross_pair_min_units);
  r.pairs.spec_hash = spec.hash();
  r.pairs.dataset_hash = labeled.data.content_hash();
  return r;
}

/// Pairs that break one-to-one use or no longer satisfy the spec; empty when
/// the set is valid.
inline std::vector<std::string> audit_pairs(const LabeledDataset& labeled, const MatchedPairSet& set, const MatchSpec& spec) {
  std::vector<std::string> problems;
  const EligibilityRule rule(labeled.data, spec);
  std::vector<std::size_t> treated, controls;
  for (const auto& p : set.pairs) {
    if (!labeled.treated(p.treated) || !labeled.control(p.control))
      problems.push_back("pair (" + std::to_string(p.treated) + ", " + std::to_string(p.control) + ") has wrong arms");
    if (!rule.eligible(p.treated, p.control))
      problems.push_back("pair (" + std::to_string(p.treated) + ", " + std::to_string(p.control) + ") is not eligible");
    treated.push_back(p.treated);
    controls.push_back(p.control);
  }
  std::sort(treated.begin(), treated.end());
  std::sort(controls.begin(), controls.end());
  if (std::adjacent_find(treated.begin(), treated.end()) != treated.end()) problems.push_back("treated unit reused");
  if (std::adjacent_find(controls.begin(), controls.end()) != controls.end()) problems.push_back("control unit reused");
  return problems;
}

/// CSV: treated_timestamp, control_timestamp, temporal_distance (in units of
/// the dataset granularity).
inline void write_pairs_csv(std::ostream& out, const MatchedPairSet& set, const TimeSeriesDataset& ds) {
  out << "treated_timestamp,control_timestamp,temporal_distance\n";
  for (const auto& p : set.pairs)
    out << format_timestamp(ds.timestamp(p.treated), ds.granularity()) << ','
        << format_timestamp(ds.timestamp(p.control), ds.granularity()) << ',' << p.distance() << '\n';
}

// ---------------------------------------------------------------------------
// Spillover audit

struct SpilloverReport {
  /// Per pair (same order as the pair set): distance in units from the
  /// treated unit to the nearest control of any other pair. Empty for a
  /// single pair.
  std::vector<std::int64_t> min_cross_distance;
  /// Fraction of treated units whose min_cross_distance <= horizon.
  std::vector<std::pair<std::int64_t, double>> fractions;
  std::int64_t min_within_pair_distance = 0;
};

inline SpilloverReport spillover_report(const MatchedPairSet& set, std::span<const std::int64_t> horizons) {
  if (set.empty()) throw ParameterError("spillover_report: pair set is empty");
  SpilloverReport r;
  r.min_within_pair_distance = std::numeric_limits<std::int64_t>::max();
  for (const auto& p : set.pairs) r.min_within_pair_distance = std::min(r.min_within_pair_distance, p.distance());
  if (set.size() < 2) return r;

  std::vector<std::pair<std::size_t, std::size_t>> controls;  // (control unit, pair index)
  for (std::size_t i = 0; i < set.size(); ++i) controls.emplace_back(set.pairs[i].control, i);
  std::sort(controls.begin(), controls.end());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::size_t t = set.pairs[i].treated;
    auto it = std::lower_bound(controls.begin(), controls.end(), std::make_pair(t, std::size_t{0}));
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    // Nearest neighbours on each side, skipping this pair's own control.
    for (auto f = it; f != controls.end(); ++f) {
      if (f->second == i) continue;
      best = std::min(best, static_cast<std::int64_t>(f->first - t));
      break;
    }
    for (auto b = it; b != controls.begin();) {
      --b;
      if (b->second == i) continue;
      best = std::min(best, static_cast<std::int64_t>(t - b->first));
      break;
    }
    r.min_cross_distance.push_back(best);
  }
  for (auto h : horizons) {
    std::size_t n = 0;
    for (auto d : r.min_cross_distance) n += (d <= h);
    r.fractions.emplace_back(h, static_cast<double>(n) / static_cast<double>(r.min_cross_distance.size()));
  }
  return r;
}

}  // namespace pairexp
