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

#include <cmath>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pairexp/matching.hpp"

namespace pairexp {

struct CovariateRef {
  std::string column;
  int lag = 0;
  std::string label() const { return lag == 0 ? column : lag_column_name(column, lag); }
};

// ---------------------------------------------------------------------------
// Love-plot statistics

struct ContinuousBalance {
  std::string covariate;
  std::optional<double> before;  // |SMD|; empty when degenerate
  std::optional<double> after;
  double pooled_sd = 0;          // pre-match divisor
  bool degenerate = false;
};

struct CategoricalBalance {
  std::string covariate;
  std::string level;
  double before = 0;  // |p_treated - p_control|
  double after = 0;
};

struct BalanceReport {
  std::vector<ContinuousBalance> continuous;
  std::vector<CategoricalBalance> categorical;
};

namespace balance_detail {

struct Moments {
  double n = 0, mean = 0, m2 = 0;
  void add(double x) {
    n += 1;
    double delta = x - mean;
    mean += delta / n;
    m2 += delta * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
};

}  // namespace balance_detail

/// Before matching compares every treated unit with every control unit;
/// after matching only the matched units. Both stages divide by the
/// pre-match pooled standard deviation sqrt((s_t^2 + s_c^2) / 2).
inline BalanceReport balance_report(const LabeledDataset& labeled, const MatchedPairSet& set, std::span<const CovariateRef> covariates) {
  using balance_detail::Moments;
  BalanceReport rep;
  const auto n = labeled.data.size();
  for (const auto& cov : covariates) {
    const Column& col = labeled.data.column(cov.column);
    auto value = [&](std::size_t t) { return col.at(static_cast<std::ptrdiff_t>(t) + cov.lag); };
    if (col.spec.kind == ColumnKind::numeric) {
      Moments bt, bc, at, ac;
      for (std::size_t t = 0; t < n; ++t) {
        if (labeled.arms[t] == Arm::excluded) continue;
        if (auto v = value(t)) (labeled.treated(t) ? bt : bc).add(*v);
      }
      for (const auto& p : set.pairs) {
        if (auto v = value(p.treated)) at.add(*v);
        if (auto v = value(p.control)) ac.add(*v);
      }
      ContinuousBalance b{cov.label(), std::nullopt, std::nullopt, 0.0, false};
      b.pooled_sd = std::sqrt((bt.variance() + bc.variance()) / 2.0);
      if (!(b.pooled_sd > 0.0) || bt.n == 0 || bc.n == 0) {
        b.degenerate = true;
      } else {
        b.before = std::fabs(bt.mean - bc.mean) / b.pooled_sd;
        if (at.n > 0 && ac.n > 0) b.after = std::fabs(at.mean - ac.mean) / b.pooled_sd;
      }
      rep.continuous.push_back(std::move(b));
    } else {
      const std::size_t L = col.levels.size();
      std::vector<double> bt(L), bc(L), at(L), ac(L);
      double nbt = 0, nbc = 0, nat = 0, nac = 0;
      for (std::size_t t = 0; t < n; ++t) {
        if (labeled.arms[t] == Arm::excluded) continue;
        if (auto v = value(t)) {
          auto k = static_cast<std::size_t>(*v);
          if (labeled.treated(t)) {
            bt[k] += 1;
            nbt += 1;
          } else {
            bc[k] += 1;
            nbc += 1;
          }
        }
      }
      for (const auto& p : set.pairs) {
        if (auto v = value(p.treated)) {
          at[static_cast<std::size_t>(*v)] += 1;
          nat += 1;
        }
        if (auto v = value(p.control)) {
          ac[static_cast<std::size_t>(*v)] += 1;
          nac += 1;
        }
      }
      auto prop = [](double c, double total) { return total > 0 ? c / total : 0.0; };
      for (std::size_t k = 0; k < L; ++k) {
        rep.categorical.push_back({cov.label(), col.levels[k], std::fabs(prop(bt[k], nbt) - prop(bc[k], nbc)),
                                   std::fabs(prop(at[k], nat) - prop(ac[k], nac))});
      }
    }
  }
  return rep;
}

/// CSV rows (covariate, stage, statistic) for external Love plots.
/// Categorical levels appear as "covariate=level".
inline void write_love_plot_csv(std::ostream& out, const BalanceReport& rep) {
  out << "covariate,stage,statistic\n";
  for (const auto& b : rep.continuous) {
    out << b.covariate << ",before," << (b.before ? format_number(*b.before) : "") << '\n';
    out << b.covariate << ",after," << (b.after ? format_number(*b.after) : "") << '\n';
  }
  for (const auto& b : rep.categorical) {
    out << b.covariate << '=' << b.level << ",before," << format_number(b.before) << '\n';
    out << b.covariate << '=' << b.level << ",after," << format_number(b.after) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Randomization check for overall balance

struct RandomizationCheckResult {
  double observed = 0;
  std::vector<double> null_sample;
  double p_value = 1.0;
  std::size_t rank = 0;      // rank of the covariance used
  std::size_t pairs = 0;     // pairs with every covariate observed
  std::size_t dropped = 0;
};

/// Quadratic form m' S+ m, where m is the mean of the within-pair covariate
/// difference vectors v_i and S = sum_i v_i v_i' / P^2 is the covariance of m
/// under independent within-pair label swaps.
class MahalanobisBalance {
 public:
  explicit MahalanobisBalance(Eigen::MatrixXd diffs) : v_(std::move(diffs)) {
    const auto p = static_cast<double>(v_.rows());
    Eigen::MatrixXd s = v_.transpose() * v_ / (p * p);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    const auto& ev = eig.eigenvalues();
    const double top = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
    const double cut = top * 1e-10 * static_cast<double>(std::max<Eigen::Index>(1, ev.size()));
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (ev(i) > cut && ev(i) > 0.0) {
        inv(i) = 1.0 / ev(i);
        ++rank_;
      }
    }
    pinv_ = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  }

  /// Statistic for label swaps `signs` (+1 keeps the observed labels).
  double operator()(const Eigen::VectorXd& signs) const {
    Eigen::VectorXd m = v_.transpose() * signs / static_cast<double>(v_.rows());
    return m.dot(pinv_ * m);
  }
  double observed() const { return (*this)(Eigen::VectorXd::Ones(v_.rows())); }
  std::size_t rank() const { return rank_; }
  Eigen::Index pairs() const { return v_.rows(); }

 private:
  Eigen::MatrixXd v_;
  Eigen::MatrixXd pinv_;
  std::size_t rank_ = 0;
};

/// Within-pair covariate differences (rows = pairs with all covariates
/// observed). Categorical covariates enter as their level codes only when
/// binary; use exact matching or dummies otherwise.
inline Eigen::MatrixXd covariate_differences(const TimeSeriesDataset& ds, const MatchedPairSet& set,
                                             std::span<const CovariateRef> covariates, std::size_t* dropped = nullptr) {
  std::vector<const Column*> cols;
  for (const auto& c : covariates) {
    const Column& col = ds.column(c.column);
    if (col.spec.kind == ColumnKind::categorical && col.levels.size() > 2)
      throw ConfigError("randomization_check: categorical covariate \"" + c.column + "\" has more than two levels");
    cols.push_back(&col);
  }
  std::vector<std::vector<double>> rows;
  std::size_t drop = 0;
  for (const auto& p : set.pairs) {
    std::vector<double> row;
    bool ok = true;
    for (std::size_t k = 0; k < cols.size() && ok; ++k) {
      auto a = cols[k]->at(static_cast<std::ptrdiff_t>(p.treated) + covariates[k].lag);
      auto b = cols[k]->at(static_cast<std::ptrdiff_t>(p.control) + covariates[k].lag);
      if (!a || !b) ok = false;
      else row.push_back(*a - *b);
    }
    if (ok) rows.push_back(std::move(row));
    else ++drop;
  }
  if (dropped) *dropped = drop;
  Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < cols.size(); ++k) v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return v;
}

/// Permutation test of as-if randomization within pairs from a matrix of
/// pair-difference vectors. p = share of null statistics >= observed.
inline RandomizationCheckResult randomization_check(const Eigen::MatrixXd& diffs, std::size_t n_perm, std::uint64_t seed) {
  if (diffs.rows() < 2) throw ParameterError("randomization_check: at least two pairs are required");
  if (n_perm == 0) throw ParameterError("randomization_check: n_perm must be positive");
  MahalanobisBalance stat(diffs);
  RandomizationCheckResult r;
  r.pairs = static_cast<std::size_t>(diffs.rows());
  r.rank = stat.rank();
  r.observed = stat.observed();
  std::mt19937_64 eng(seed);
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd signs(diffs.rows());
  r.null_sample.reserve(n_perm);
  std::size_t ge = 0;
  const double tol = 1e-9 * (1.0 + std::fabs(r.observed));
  for (std::size_t b = 0; b < n_perm; ++b) {
    for (Eigen::Index i = 0; i < signs.size(); ++i) signs(i) = coin(eng) ? -1.0 : 1.0;
    double s = stat(signs);
    r.null_sample.push_back(s);
    ge += s >= r.observed - tol;
  }
  r.p_value = static_cast<double>(ge) / static_cast<double>(n_perm);
  return r;
}

inline RandomizationCheckResult randomization_check(const TimeSeriesDataset& ds, const MatchedPairSet& set,
                                                    std::span<const CovariateRef> covariates, std::size_t n_perm, std::uint64_t seed) {
  std::size_t dropped = 0;
  auto v = covariate_differences(ds, set, covariates, &dropped);
  auto r = randomization_check(v, n_perm, seed);
  r.dropped = dropped;
  return r;
}

// ---------------------------------------------------------------------------
// Intervention check

struct InterventionProfileRow {
  int offset = 0;
  std::optional<double> treated_mean;
  std::optional<double> control_mean;
  std::optional<double> difference;
};

/// Mean intervention measure (e.g. gross tonnage) of matched treated and
/// control units at t + offset.
inline std::vector<InterventionProfileRow> intervention_profile(const TimeSeriesDataset& ds, const MatchedPairSet& set,
                                                                std::string_view column, std::span<const int> offsets) {
  const Column& col = ds.column(column);
  std::vector<InterventionProfileRow> out;
  for (int j : offsets) {
    double st = 0, sc = 0, nt = 0, nc = 0;
    for (const auto& p : set.pairs) {
      if (auto v = col.at(static_cast<std::ptrdiff_t>(p.treated) + j)) {
        st += *v;
        nt += 1;
      }
      if (auto v = col.at(static_cast<std::ptrdiff_t>(p.control) + j)) {
        sc += *v;
        nc += 1;
      }
    }
    InterventionProfileRow row{j, std::nullopt, std::nullopt, std::nullopt};
    if (nt > 0) row.treated_mean = st / nt;
    if (nc > 0) row.control_mean = sc / nc;
    if (row.treated_mean && row.control_mean) row.difference = *row.treated_mean - *row.control_mean;
    out.push_back(row);
  }
  return out;
}

}  // namespace pairexp
