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

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pairexp/gaussian.hpp"
#include "pairexp/matching.hpp"

namespace pairexp {

// ---------------------------------------------------------------------------
// Pair differences

/// d_i = Y_treated - Y_control for one outcome read at t + offset. Pairs with
/// either outcome missing are left out; `pair_index` maps back into the set.
struct PairDifferenceSeries {
  std::string outcome;
  int offset = 0;
  std::vector<double> d;
  std::vector<std::size_t> pair_index;
  std::size_t excluded = 0;

  std::size_t size() const { return d.size(); }
};

inline PairDifferenceSeries pair_differences_allow_empty(const TimeSeriesDataset& ds, const MatchedPairSet& set,
                                                         std::string_view outcome, int offset) {
  const Column& col = ds.column(outcome);
  if (col.spec.kind != ColumnKind::numeric) throw ConfigError("outcome \"" + std::string(outcome) + "\" must be numeric");
  PairDifferenceSeries s{std::string(outcome), offset, {}, {}, 0};
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& p = set.pairs[i];
    auto yt = col.at(static_cast<std::ptrdiff_t>(p.treated) + offset);
    auto yc = col.at(static_cast<std::ptrdiff_t>(p.control) + offset);
    if (!yt || !yc) {
      ++s.excluded;
      continue;
    }
    s.d.push_back(*yt - *yc);
    s.pair_index.push_back(i);
  }
  return s;
}

inline PairDifferenceSeries pair_differences(const TimeSeriesDataset& ds, const MatchedPairSet& set, std::string_view outcome,
                                             int offset) {
  auto s = pair_differences_allow_empty(ds, set, outcome, offset);
  if (s.d.empty())
    throw DataError("pair_differences: no pair has both outcomes observed for \"" + std::string(outcome) + "\" at offset " +
                    std::to_string(offset));
  return s;
}

inline double point_estimate(std::span<const double> d) {
  if (d.empty()) throw ParameterError("point_estimate: empty difference series");
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

// ---------------------------------------------------------------------------
// Neyman

struct NeymanResult {
  double estimate = 0;
  double variance = 0;  // conservative
  double std_error = 0;
  double z = 0;
  double lower = 0;
  double upper = 0;
  std::size_t pairs = 0;
};

inline NeymanResult neyman(std::span<const double> d, double alpha = 0.05) {
  if (d.size() < 2) throw ParameterError("neyman: variance is not defined with fewer than two pairs");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("neyman: alpha must lie in (0, 1)");
  NeymanResult r;
  r.pairs = d.size();
  r.estimate = point_estimate(d);
  double ss = 0.0;
  for (double x : d) ss += (x - r.estimate) * (x - r.estimate);
  const auto n = static_cast<double>(d.size());
  r.variance = ss / (n * (n - 1.0));
  r.std_error = std::sqrt(r.variance);
  r.z = two_sided_critical(alpha);
  r.lower = r.estimate - r.z * r.std_error;
  r.upper = r.estimate + r.z * r.std_error;
  return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed rank

struct WilcoxonResult {
  double statistic = 0;     // sum of ranks of |d - tau| over positive d - tau
  std::size_t nonzero = 0;  // pairs left after dropping zeros
  bool degenerate = false;  // every adjusted difference is zero
};

namespace inference_detail {

inline double zero_tolerance(double a, double b) { return 1e-9 * (1.0 + std::fabs(a) + std::fabs(b)); }

/// Average ranks (1-based) of |x| among entries that are not zero; zeros get
/// rank 0. Values closer than the zero tolerance tie.
inline std::vector<double> signed_rank_magnitudes(std::span<const double> d, double tau) {
  const std::size_t n = d.size();
  std::vector<double> mag(n), rank(n, 0.0);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    mag[i] = std::fabs(d[i] - tau);
    if (mag[i] > zero_tolerance(d[i], tau)) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mag[a] < mag[b] || (mag[a] == mag[b] && a < b); });
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && mag[order[j]] - mag[order[j - 1]] <= 1e-9 * (1.0 + mag[order[j]])) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }
  return rank;
}

}  // namespace inference_detail

inline WilcoxonResult wilcoxon_statistic(std::span<const double> d, double tau) {
  if (d.empty()) throw ParameterError("wilcoxon_statistic: empty difference series");
  auto rank = inference_detail::signed_rank_magnitudes(d, tau);
  WilcoxonResult r;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (rank[i] == 0.0) continue;
    ++r.nonzero;
    if (d[i] - tau > 0.0) r.statistic += rank[i];
  }
  r.degenerate = r.nonzero == 0;
  return r;
}

// ---------------------------------------------------------------------------
// Sharp-null grid

/// tau_k = k * step for k in [first, last]; always contains 0.
class SharpNullGrid {
 public:
  SharpNullGrid() = default;
  SharpNullGrid(double step, std::int64_t first, std::int64_t last) : step_(step), first_(first), last_(last) {
    if (!(step > 0.0)) throw ConfigError("grid: step must be positive");
    if (first > 0 || last < 0) throw ConfigError("grid: range must contain 0");
  }

  /// Smallest grid of the given step whose range covers [lo, hi] and 0.
  static SharpNullGrid covering(double lo, double hi, double step) {
    if (!(step > 0.0)) throw ConfigError("grid: step must be positive");
    if (!(lo <= hi)) throw ConfigError("grid: min must not exceed max");
    auto first = static_cast<std::int64_t>(std::floor(lo / step + 1e-9));
    auto last = static_cast<std::int64_t>(std::ceil(hi / step - 1e-9));
    return SharpNullGrid(step, std::min<std::int64_t>(first, 0), std::max<std::int64_t>(last, 0));
  }

  std::size_t size() const { return static_cast<std::size_t>(last_ - first_ + 1); }
  double at(std::size_t i) const { return value(first_ + static_cast<std::int64_t>(i)); }
  double min() const { return value(first_); }
  double max() const { return value(last_); }
  double step() const { return step_; }
  std::int64_t first() const { return first_; }
  std::int64_t last() const { return last_; }
  bool contains(double tau) const { return tau >= min() - 1e-9 * step_ && tau <= max() + 1e-9 * step_; }

  SharpNullGrid widened_to(double lo, double hi) const {
    auto g = covering(std::min(lo, min()), std::max(hi, max()), step_);
    return g;
  }

 private:
  // k / (1/step) when 1/step is an integer, so 0.1-steps print as -0.3, not
  // -0.30000000000000004.
  double value(std::int64_t k) const {
    const double inv = 1.0 / step_;
    const double r = std::round(inv);
    if (r >= 1.0 && std::fabs(inv - r) <= 1e-9 * r) return static_cast<double>(k) / r;
    return static_cast<double>(k) * step_;
  }

  double step_ = 0.1;
  std::int64_t first_ = -100;
  std::int64_t last_ = 100;
};

// ---------------------------------------------------------------------------
// Randomization engine

enum class Statistic { mean_difference, wilcoxon_signed_rank, studentized };

inline std::string_view to_string(Statistic s) {
  switch (s) {
    case Statistic::mean_difference: return "mean_difference";
    case Statistic::wilcoxon_signed_rank: return "wilcoxon_signed_rank";
    case Statistic::studentized: return "studentized";
  }
  return "?";
}

inline Statistic parse_statistic(std::string_view s) {
  if (s == "mean_difference") return Statistic::mean_difference;
  if (s == "wilcoxon_signed_rank") return Statistic::wilcoxon_signed_rank;
  if (s == "studentized") return Statistic::studentized;
  throw ConfigError("unknown statistic \"" + std::string(s) + "\"");
}

struct RandomizationSettings {
  std::size_t draws = 10000;
  std::size_t exact_max_pairs = 20;  // enumerate all 2^P assignments up to this P
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

namespace inference_detail {

inline constexpr std::size_t kDrawBlock = 256;

/// Sign draws shared by every grid point (common random numbers). Draw b, pair
/// i gets a 32-bit uniform; the pair difference keeps its positive sign iff
/// the uniform is below pi * 2^32, so raising pi can only turn signs positive.
/// Draws are generated in fixed blocks, each from its own seeded engine.
inline void fill_block_uniforms(std::uint64_t seed, std::size_t block, std::size_t rows, std::size_t pairs,
                                std::vector<std::uint32_t>& out) {
  std::mt19937_64 eng(derive_seed(seed, "sign-block/" + std::to_string(block)));
  out.resize(rows * pairs);
  for (auto& u : out) u = static_cast<std::uint32_t>(eng() >> 32);
}

inline std::uint64_t sign_threshold(double pi) {
  return static_cast<std::uint64_t>(std::ldexp(pi, 32));
}

/// Null model for one hypothesised tau: simulated statistic as a function of
/// S = sum_i e_i * magnitude_i with e_i = +-1.
struct NullModel {
  Statistic stat;
  std::size_t n;
  double tau;
  double q;         // sum of squared adjusted differences (studentized)
  double rank_sum;  // sum of ranks (wilcoxon)
  double observed;
  double tol;

  double simulate(double s) const {
    const auto p = static_cast<double>(n);
    switch (stat) {
      case Statistic::mean_difference: return tau + s / p;
      case Statistic::wilcoxon_signed_rank: return (rank_sum + s) / 2.0;
      case Statistic::studentized: {
        double m = s / p;
        return studentize(m, std::max(q - p * m * m, 0.0) / (p * (p - 1.0)), q);
      }
    }
    return 0.0;
  }

  static double studentize(double m, double v, double q) {
    double scale = std::sqrt(std::max(q, 0.0));
    double sd = std::sqrt(v);
    if (sd <= 1e-12 * (1.0 + scale)) {
      if (std::fabs(m) <= 1e-12 * (1.0 + scale)) return 0.0;
      return std::copysign(std::numeric_limits<double>::infinity(), m);
    }
    return m / sd;
  }

  bool at_least(double sim) const { return sim >= observed - tol; }
  bool at_most(double sim) const { return sim <= observed + tol; }
};

/// Magnitudes (column g holds the values for grid point g) and null models.
inline void build_models(std::span<const double> d, const SharpNullGrid& grid, Statistic stat, Eigen::MatrixXd& mags,
                         std::vector<NullModel>& models) {
  const std::size_t n = d.size(), G = grid.size();
  mags.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(G));
  models.clear();
  const double mean = point_estimate(d);
  // One tie tolerance for the whole grid keeps p-values monotone in tau.
  double dmax = std::max(std::fabs(grid.min()), std::fabs(grid.max()));
  for (double x : d) dmax = std::max(dmax, std::fabs(x));
  for (std::size_t g = 0; g < G; ++g) {
    const double tau = grid.at(g);
    NullModel m{stat, n, tau, 0.0, 0.0, 0.0, 0.0};
    if (stat == Statistic::wilcoxon_signed_rank) {
      auto rank = signed_rank_magnitudes(d, tau);
      for (std::size_t i = 0; i < n; ++i) {
        mags(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)) = rank[i];
        m.rank_sum += rank[i];
        if (rank[i] > 0.0 && d[i] - tau > 0.0) m.observed += rank[i];
      }
      m.tol = 1e-9 * (1.0 + m.rank_sum);
    } else {
      double sum_x = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = d[i] - tau;
        mags(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)) = std::fabs(x);
        m.q += x * x;
        sum_x += x;
      }
      if (stat == Statistic::mean_difference) {
        m.observed = mean;
        m.tol = 1e-9 * (1.0 + 2.0 * dmax);
      } else {
        const auto p = static_cast<double>(n);
        const double mx = sum_x / p;
        m.observed = NullModel::studentize(mx, std::max(m.q - p * mx * mx, 0.0) / (p * (p - 1.0)), m.q);
        m.tol = std::isinf(m.observed) ? 0.0 : 1e-9 * (1.0 + std::fabs(m.observed));
      }
    }
    models.push_back(m);
  }
}

struct TailProbabilities {
  std::vector<double> ge;  // Pr(simulated >= observed)
  std::vector<double> le;  // Pr(simulated <= observed)
};

inline TailProbabilities exact_tails(const Eigen::MatrixXd& mags, const std::vector<NullModel>& models, double pi) {
  const auto n = static_cast<std::size_t>(mags.rows());
  const std::size_t h1 = n / 2, h2 = n - h1;
  const std::size_t n1 = std::size_t{1} << h1, n2 = std::size_t{1} << h2;
  std::vector<double> weight(n + 1);
  for (std::size_t k = 0; k <= n; ++k)
    weight[k] = std::pow(pi, static_cast<double>(k)) * std::pow(1.0 - pi, static_cast<double>(n - k));
  TailProbabilities out{std::vector<double>(models.size()), std::vector<double>(models.size())};
  std::vector<double> s1(n1), s2(n2);
  std::vector<std::uint8_t> k1(n1), k2(n2);
  std::vector<std::uint64_t> ge(n + 1), le(n + 1);
  auto half_sums = [&](std::size_t g, std::size_t offset, std::size_t h, std::vector<double>& s, std::vector<std::uint8_t>& k) {
    double base = 0.0;
    for (std::size_t i = 0; i < h; ++i) base -= mags(static_cast<Eigen::Index>(offset + i), static_cast<Eigen::Index>(g));
    s[0] = base;
    k[0] = 0;
    for (std::size_t mask = 1; mask < (std::size_t{1} << h); ++mask) {
      auto low = static_cast<std::size_t>(std::countr_zero(mask));
      std::size_t rest = mask & (mask - 1);
      s[mask] = s[rest] + 2.0 * mags(static_cast<Eigen::Index>(offset + low), static_cast<Eigen::Index>(g));
      k[mask] = static_cast<std::uint8_t>(k[rest] + 1);
    }
  };
  for (std::size_t g = 0; g < models.size(); ++g) {
    half_sums(g, 0, h1, s1, k1);
    half_sums(g, h1, h2, s2, k2);
    std::fill(ge.begin(), ge.end(), 0);
    std::fill(le.begin(), le.end(), 0);
    const NullModel& m = models[g];
    for (std::size_t a = 0; a < n1; ++a) {
      for (std::size_t b = 0; b < n2; ++b) {
        const double sim = m.simulate(s1[a] + s2[b]);
        const std::size_t k = static_cast<std::size_t>(k1[a]) + k2[b];
        ge[k] += m.at_least(sim);
        le[k] += m.at_most(sim);
      }
    }
    double pg = 0.0, pl = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      pg += weight[k] * static_cast<double>(ge[k]);
      pl += weight[k] * static_cast<double>(le[k]);
    }
    out.ge[g] = std::min(pg, 1.0);
    out.le[g] = std::min(pl, 1.0);
  }
  return out;
}

inline TailProbabilities monte_carlo_tails(const Eigen::MatrixXd& mags, const std::vector<NullModel>& models, double pi,
                                           const RandomizationSettings& rs) {
  const auto n = static_cast<std::size_t>(mags.rows());
  const std::size_t G = models.size();
  const std::size_t blocks = (rs.draws + kDrawBlock - 1) / kDrawBlock;
  const std::uint64_t thr = sign_threshold(pi);
  std::vector<std::vector<std::uint64_t>> ge(blocks, std::vector<std::uint64_t>(G)), le(blocks, std::vector<std::uint64_t>(G));
  parallel_for(blocks, rs.threads, [&](std::size_t blk) {
    const std::size_t rows = std::min(kDrawBlock, rs.draws - blk * kDrawBlock);
    std::vector<std::uint32_t> u;
    fill_block_uniforms(rs.seed, blk, rows, n, u);
    Eigen::MatrixXd signs(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i)
        signs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = u[r * n + i] < thr ? 1.0 : -1.0;
    Eigen::MatrixXd s = signs * mags;
    for (std::size_t g = 0; g < G; ++g) {
      const NullModel& m = models[g];
      std::uint64_t cg = 0, cl = 0;
      for (std::size_t r = 0; r < rows; ++r) {
        const double sim = m.simulate(s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(g)));
        cg += m.at_least(sim);
        cl += m.at_most(sim);
      }
      ge[blk][g] = cg;
      le[blk][g] = cl;
    }
  });
  TailProbabilities out{std::vector<double>(G), std::vector<double>(G)};
  for (std::size_t g = 0; g < G; ++g) {
    std::uint64_t cg = 0, cl = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
      cg += ge[b][g];
      cl += le[b][g];
    }
    out.ge[g] = static_cast<double>(cg) / static_cast<double>(rs.draws);
    out.le[g] = static_cast<double>(cl) / static_cast<double>(rs.draws);
  }
  return out;
}

}  // namespace inference_detail

/// Test-inversion output for one statistic.
struct FisherianResult {
  Statistic statistic = Statistic::mean_difference;
  double estimate = 0;  // mean of d
  double alpha = 0.05;
  std::optional<double> lower;  // empty when no grid point survives
  std::optional<double> upper;
  bool lower_at_grid_edge = false;
  bool upper_at_grid_edge = false;
  std::vector<double> tau;
  std::vector<double> p_upper;  // p+(tau)
  std::vector<double> p_lower;  // p-(tau)
  bool exact = false;
  std::size_t draws = 0;  // assignments evaluated (2^P when exact)
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Core inversion routine. Signs of d_i - tau are positive with probability
/// pi_upper when computing p+ and pi_lower when computing p-; 1/2 gives the
/// plain randomization test, other values the Rosenbaum worst cases.
inline FisherianResult invert_sharp_nulls(std::span<const double> d_in, const SharpNullGrid& grid, double alpha, Statistic stat,
                                          const RandomizationSettings& rs, double pi_upper = 0.5, double pi_lower = 0.5) {
  using namespace inference_detail;
  if (d_in.empty()) throw ParameterError("fisherian_interval: empty difference series");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("fisherian_interval: alpha must lie in (0, 1)");
  if (stat == Statistic::studentized && d_in.size() < 2)
    throw ParameterError("studentized_interval: at least two pairs are required");
  if (rs.draws == 0) throw ParameterError("fisherian_interval: draws must be positive");

  std::vector<double> d(d_in.begin(), d_in.end());
  std::sort(d.begin(), d.end());
  FisherianResult r;
  r.statistic = stat;
  r.alpha = alpha;
  r.seed = rs.seed;
  r.estimate = point_estimate(d);
  if (!grid.contains(r.estimate))
    throw GridRangeError("fisherian_interval: point estimate " + format_number(r.estimate) + " lies outside the grid [" +
                         format_number(grid.min()) + ", " + format_number(grid.max()) + "]; expand the grid");
  if (stat == Statistic::wilcoxon_signed_rank && d.front() == d.back())
    r.warnings.push_back("all pair differences are equal: the signed-rank null distribution is degenerate");

  Eigen::MatrixXd mags;
  std::vector<NullModel> models;
  build_models(d, grid, stat, mags, models);

  if (rs.exact_max_pairs > 30) throw ParameterError("fisherian_interval: exact enumeration is capped at 30 pairs");
  r.exact = d.size() <= rs.exact_max_pairs;
  r.draws = r.exact ? (std::size_t{1} << d.size()) : rs.draws;
  auto tails = [&](double pi) { return r.exact ? exact_tails(mags, models, pi) : monte_carlo_tails(mags, models, pi, rs); };
  TailProbabilities up = tails(pi_upper);
  TailProbabilities down = pi_lower == pi_upper ? up : tails(pi_lower);

  const std::size_t G = grid.size();
  r.tau.resize(G);
  for (std::size_t g = 0; g < G; ++g) r.tau[g] = grid.at(g);
  r.p_upper = std::move(up.ge);
  r.p_lower = std::move(down.le);

  const double cut = alpha / 2.0;
  for (std::size_t g = 0; g < G; ++g) {
    if (r.p_upper[g] > cut) {
      r.lower = r.tau[g];
      r.lower_at_grid_edge = g == 0;
      break;
    }
  }
  for (std::size_t g = G; g-- > 0;) {
    if (r.p_lower[g] > cut) {
      r.upper = r.tau[g];
      r.upper_at_grid_edge = g + 1 == G;
      break;
    }
  }
  if (!r.lower || !r.upper) r.warnings.push_back("no grid point is retained at this alpha");
  return r;
}

inline FisherianResult fisherian_interval(std::span<const double> d, const SharpNullGrid& grid, double alpha, Statistic stat,
                                          const RandomizationSettings& rs) {
  return invert_sharp_nulls(d, grid, alpha, stat, rs);
}

inline FisherianResult studentized_interval(std::span<const double> d, const SharpNullGrid& grid, double alpha,
                                            const RandomizationSettings& rs) {
  return invert_sharp_nulls(d, grid, alpha, Statistic::studentized, rs);
}

/// p+ non-decreasing and p- non-increasing along the grid.
inline bool p_values_monotone(const FisherianResult& r) {
  for (std::size_t g = 1; g < r.tau.size(); ++g)
    if (r.p_upper[g] < r.p_upper[g - 1] || r.p_lower[g] > r.p_lower[g - 1]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Full report for one outcome/offset

struct InferenceSettings {
  SharpNullGrid grid = SharpNullGrid(0.1, -100, 100);
  double alpha = 0.05;
  RandomizationSettings randomization;
  bool auto_widen = true;
  bool studentized = true;
  bool wilcoxon = false;
};

struct IntervalReport {
  std::string outcome;
  int offset = 0;
  std::size_t pairs = 0;
  std::size_t excluded_pairs = 0;
  double estimate = 0;
  SharpNullGrid grid;
  FisherianResult fisherian;
  std::optional<NeymanResult> neyman;
  std::optional<FisherianResult> studentized;
  std::optional<FisherianResult> wilcoxon;
};

namespace inference_detail {

/// Grid guaranteed to contain the estimate; widened around it when needed.
inline SharpNullGrid grid_for(std::span<const double> d, const InferenceSettings& s) {
  const double est = point_estimate(d);
  if (s.grid.contains(est) || !s.auto_widen) return s.grid;
  double half = d.size() >= 2 ? 6.0 * neyman(d, s.alpha).std_error : 0.0;
  half = std::max(half, 10.0 * s.grid.step());
  return s.grid.widened_to(est - half, est + half);
}

template <class Run>
FisherianResult with_widening(std::span<const double> d, SharpNullGrid& grid, const InferenceSettings& s, Run&& run) {
  FisherianResult r = run(grid);
  for (int round = 0; s.auto_widen && round < 6 && (r.lower_at_grid_edge || r.upper_at_grid_edge); ++round) {
    double span = grid.max() - grid.min();
    grid = grid.widened_to(r.lower_at_grid_edge ? grid.min() - span : grid.min(), r.upper_at_grid_edge ? grid.max() + span : grid.max());
    r = run(grid);
  }
  (void)d;
  return r;
}

}  // namespace inference_detail

/// Point estimate, Fisherian interval (mean difference), and optionally the
/// Neyman interval, the studentized interval and the signed-rank interval.
/// All randomization statistics share the same seed.
inline IntervalReport analyze(const PairDifferenceSeries& series, const InferenceSettings& s) {
  using namespace inference_detail;
  if (series.d.empty()) throw DataError("analyze: no pairs for \"" + series.outcome + "\" at offset " + std::to_string(series.offset));
  IntervalReport r;
  r.outcome = series.outcome;
  r.offset = series.offset;
  r.pairs = series.size();
  r.excluded_pairs = series.excluded;
  r.estimate = point_estimate(series.d);
  SharpNullGrid grid = grid_for(series.d, s);
  auto run = [&](Statistic stat) {
    return [&, stat](const SharpNullGrid& g) { return invert_sharp_nulls(series.d, g, s.alpha, stat, s.randomization); };
  };
  r.fisherian = with_widening(series.d, grid, s, run(Statistic::mean_difference));
  if (series.size() >= 2) {
    r.neyman = neyman(series.d, s.alpha);
    if (s.studentized) r.studentized = with_widening(series.d, grid, s, run(Statistic::studentized));
  }
  if (s.wilcoxon) r.wilcoxon = with_widening(series.d, grid, s, run(Statistic::wilcoxon_signed_rank));
  // Intervals computed on a grid widened by a later statistic stay valid; the
  // stored grid is the widest one used.
  r.grid = grid;
  return r;
}

// ---------------------------------------------------------------------------
// Subgroups

struct ScatterRow {
  std::size_t pair = 0;
  std::string group;
  double difference = 0;            // outcome difference
  std::optional<double> intervention_difference;  // e.g. gross tonnage, treated minus control at t
};

struct GroupResult {
  std::string group;
  std::size_t pairs = 0;
  std::optional<IntervalReport> report;  // empty when fewer than two pairs
  std::string note;
};

struct SubgroupReport {
  std::string grouping;
  std::vector<GroupResult> groups;
  std::vector<ScatterRow> scatter;
  std::size_t ungrouped_pairs = 0;  // grouping value missing
};

/// Partitions pairs by the grouping covariate read at t (it must agree within
/// each pair) and runs the full analysis per group.
inline SubgroupReport subgroup_analysis(const TimeSeriesDataset& ds, const MatchedPairSet& set, std::string_view outcome,
                                        int offset, std::string_view grouping, std::string_view intervention,
                                        const InferenceSettings& s) {
  const Column& gcol = ds.column(grouping);
  const Column* icol = intervention.empty() ? nullptr : &ds.column(intervention);
  PairDifferenceSeries all = pair_differences(ds, set, outcome, offset);
  SubgroupReport rep;
  rep.grouping = std::string(grouping);
  std::map<std::string, PairDifferenceSeries> parts;
  std::vector<std::string> order;
  for (std::size_t k = 0; k < all.size(); ++k) {
    const auto& p = set.pairs[all.pair_index[k]];
    auto gt = gcol.at(static_cast<std::ptrdiff_t>(p.treated));
    auto gc = gcol.at(static_cast<std::ptrdiff_t>(p.control));
    if (!gt || !gc) {
      ++rep.ungrouped_pairs;
      continue;
    }
    if (*gt != *gc)
      throw DataError("subgroup_analysis: grouping covariate \"" + std::string(grouping) + "\" differs within pair " +
                      std::to_string(all.pair_index[k]) + "; group on an exact-matched covariate");
    std::string label = gcol.render(p.treated);
    auto [it, fresh] = parts.try_emplace(label, PairDifferenceSeries{all.outcome, offset, {}, {}, 0});
    if (fresh) order.push_back(label);
    it->second.d.push_back(all.d[k]);
    it->second.pair_index.push_back(all.pair_index[k]);
    ScatterRow row{all.pair_index[k], label, all.d[k], std::nullopt};
    if (icol) {
      auto vt = icol->at(static_cast<std::ptrdiff_t>(p.treated));
      auto vc = icol->at(static_cast<std::ptrdiff_t>(p.control));
      if (vt && vc) row.intervention_difference = *vt - *vc;
    }
    rep.scatter.push_back(std::move(row));
  }
  std::sort(order.begin(), order.end());
  for (const auto& label : order) {
    auto& part = parts[label];
    GroupResult g{label, part.size(), std::nullopt, ""};
    if (part.size() < 2) g.note = "fewer than two pairs; inference skipped";
    else g.report = analyze(part, s);
    rep.groups.push_back(std::move(g));
  }
  return rep;
}

}  // namespace pairexp
