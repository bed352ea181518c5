#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "termcov/covariation.hpp"
#include "termcov/errors.hpp"
#include "termcov/mc.hpp"
#include "termcov/panels.hpp"
#include "termcov/step_kernel.hpp"
#include "termcov/truncation.hpp"
#include "termcov/util.hpp"

namespace termcov {

/// Row boundaries (difference-return index space) from ISO date labels:
/// a new period starts where the YYYY prefix changes. Period k covers rows
/// [b_k, b_{k+1}), so the year-crossing return belongs to the earlier year.
inline std::vector<int> year_boundaries_from_dates(const std::vector<std::string>& dates) {
  if (dates.size() < 2) throw DataError("year_boundaries_from_dates: need at least 2 dates");
  std::vector<int> bounds{0};
  for (size_t i = 1; i < dates.size(); ++i)
    if (dates[i].substr(0, 4) != dates[i - 1].substr(0, 4)) bounds.push_back(static_cast<int>(i));
  bounds.push_back(static_cast<int>(dates.size()) - 1);  // n_rows = n_dates - 1
  if (bounds[bounds.size() - 2] == bounds.back()) bounds.pop_back();
  return bounds;
}

struct LevelStats {
  double l = 0.0;
  int flags = 0;
  double ratio = 1.0;  // ||q^-|| / ||q||
};

struct YearReportRow {
  std::string label;
  int rows = 0;
  double hs_norm_total = 0.0;
  std::vector<LevelStats> levels;
  std::array<int, 4> d_own{};   // D(p) of the l_ref truncated kernel, own eigenbasis
  std::array<int, 4> d_long{};  // D(p) in the long-run eigenbasis
  bool degenerate = false;      // all difference returns vanish
};

struct EmpiricalResult {
  std::vector<YearReportRow> years;
  LongRunVolatility long_run;                  // average of the l_ref per-year kernels
  std::vector<CovariationResult> results_ref;  // per-year results at l_ref
};

/// Yearwise pipeline: per period, rebuild the truncation rule from that
/// period's rows only, estimate at every l, then average the l_ref kernels
/// into the long-run estimate and report dimensions in both the per-year and
/// the long-run eigenbases.
inline EmpiricalResult empirical_run(const DifferenceReturnPanel& d,
                                     const std::vector<int>& boundaries,
                                     const std::vector<std::string>& labels = {},
                                     const std::vector<double>& l_values = {3.0, 4.0, 5.0},
                                     double l_ref = 3.0) {
  if (boundaries.size() < 2) throw ConfigError("empirical_run: need at least one period");
  if (l_values.empty()) throw ConfigError("empirical_run: need at least one truncation level");
  const size_t n_years = boundaries.size() - 1;
  const double dn = d.grid.delta_n;

  EmpiricalResult out;
  out.years.resize(n_years);
  out.results_ref.reserve(n_years);

  for (size_t k = 0; k < n_years; ++k) {
    const RowRange range{boundaries[k], boundaries[k + 1]};
    require_valid_range(d, range, "empirical_run");
    auto& row = out.years[k];
    row.label = k < labels.size() ? labels[k] : std::to_string(k);
    row.rows = range.size();

    double max_norm = 0.0;
    for (int r = range.begin; r < range.end; ++r)
      max_norm = std::max(max_norm, d.values.row(r).norm());
    if (max_norm == 0.0) {
      row.degenerate = true;
      for (double l : l_values) row.levels.push_back({l, 0, 1.0});
      CovariationResult zero;
      zero.kernel = realized_covariation(d, range);
      zero.truncated_kernel = zero.kernel;
      zero.jump_kernel = kernel_scale(zero.kernel, 0.0);
      zero.rows = range;
      out.results_ref.push_back(std::move(zero));
      continue;
    }

    RuleBuildResult rule = build_rule(d, range, l_values.front());
    bool have_ref = false;
    for (double l : l_values) {
      TruncationSpec spec = rule.spec;
      spec.l = l;
      spec.u_n = std::isinf(l) ? std::numeric_limits<double>::infinity()
                               : l * std::sqrt(rule.d + 1.0) * std::pow(dn, spec.w_exponent);
      CovariationResult res = truncated_covariation(d, spec, range);
      const double total = hs_norm(res.kernel);
      row.hs_norm_total = total;
      LevelStats stats;
      stats.l = l;
      stats.flags = static_cast<int>(res.flagged_rows.size());
      stats.ratio = total > 0.0 ? hs_norm(res.truncated_kernel) / total : 1.0;
      row.levels.push_back(stats);
      if (!have_ref && l == l_ref) {
        out.results_ref.push_back(std::move(res));
        have_ref = true;
      }
    }
    if (!have_ref)
      throw ConfigError("empirical_run: l_ref must be one of the requested levels");
  }

  out.long_run = long_time_average(out.results_ref);
  const SpectralDecomposition long_spec = eigendecompose(out.long_run.kernel);

  for (size_t k = 0; k < n_years; ++k) {
    auto& row = out.years[k];
    if (row.degenerate) continue;
    const StepKernel& kern = out.results_ref[k].truncated_kernel;
    const Eigen::VectorXd own = operator_eigenvalues(kern);
    for (size_t p = 0; p < kDimensionThresholds.size(); ++p) {
      row.d_own[p] = explained_dimension(own, kDimensionThresholds[p]);
      row.d_long[p] = explained_dimension(kern, kDimensionThresholds[p], &long_spec.heights);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// RMAE factor study
// ---------------------------------------------------------------------------

enum class FactorSource { LogPricePcs, LongRunEigen };

inline std::string to_string(FactorSource s) {
  return s == FactorSource::LogPricePcs ? "log_price_pcs" : "long_run_eigen";
}

struct RmaeRow {
  int lag = 0;
  std::string source;
  int d = 0;
  double rmae = 0.0;
};

struct RmaeResult {
  std::vector<RmaeRow> rows;
  std::vector<int> validation_rows;
};

/// Seeded validation set: draws_per_year distinct difference-return rows per
/// period (all rows when a period is shorter than that).
inline std::vector<int> draw_validation_rows(const std::vector<int>& boundaries,
                                             int draws_per_year, uint64_t seed) {
  if (boundaries.size() < 2) throw ConfigError("draw_validation_rows: need at least one period");
  std::mt19937_64 rng(splitmix64(seed));
  std::vector<int> rows;
  for (size_t k = 0; k + 1 < boundaries.size(); ++k) {
    std::vector<int> pool;
    for (int r = boundaries[k]; r < boundaries[k + 1]; ++r) pool.push_back(r);
    const int take = std::min<int>(draws_per_year, static_cast<int>(pool.size()));
    for (int t = 0; t < take; ++t) {
      std::uniform_int_distribution<int> pick(t, static_cast<int>(pool.size()) - 1);
      std::swap(pool[t], pool[pick(rng)]);
    }
    rows.insert(rows.end(), pool.begin(), pool.begin() + take);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

/// Orthonormal step-function factors (cell heights) for the requested source.
/// Log-price PCs are estimated on the non-validation increments, mapped to
/// the difference-return cell grid and re-orthonormalized there.
inline Eigen::MatrixXd rmae_factors(const LogBondPanel& panel, const DifferenceReturnPanel& d,
                                    FactorSource source, int max_d,
                                    const std::vector<int>& validation_rows,
                                    const LongRunVolatility* long_run) {
  const int m = d.n_cols();
  if (source == FactorSource::LongRunEigen) {
    if (long_run == nullptr)
      throw ConfigError("rmae_factors: long-run source requires a long-run estimate");
    const SpectralDecomposition spec = eigendecompose(long_run->kernel);
    return spec.heights.leftCols(std::min<int>(max_d, spec.heights.cols()));
  }
  // increments of log prices, skipping the validation rows (same index space)
  std::vector<char> is_val(d.n_rows(), 0);
  for (int r : validation_rows) is_val[r] = 1;
  std::vector<int> keep;
  for (int r = 0; r < d.n_rows(); ++r)
    if (!is_val[r]) keep.push_back(r);
  if (keep.empty()) throw DataError("rmae_factors: no non-validation increments left");
  Eigen::MatrixXd incr(keep.size(), panel.values.cols());
  for (size_t i = 0; i < keep.size(); ++i)
    incr.row(i) = panel.values.row(keep[i] + 1) - panel.values.row(keep[i]);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(incr, Eigen::ComputeThinV);
  const int rank = std::min<int>(max_d, static_cast<int>(svd.matrixV().cols()));
  // grid-point loadings -> step heights on the d-return cells (points 1..m),
  // then re-orthonormalize in L^2
  Eigen::MatrixXd cells = svd.matrixV().block(1, 0, m, rank);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(cells);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, rank);
  return q / std::sqrt(d.grid.delta_n);
}

/// Relative mean absolute projection errors of lagged difference returns on
/// the validation dates, for nested factor counts.
inline RmaeResult rmae_study(const LogBondPanel& panel, const std::vector<int>& boundaries,
                             FactorSource source, const std::vector<int>& lags,
                             const std::vector<int>& d_values, int draws_per_year, uint64_t seed,
                             const LongRunVolatility* long_run = nullptr) {
  if (lags.empty() || d_values.empty())
    throw ConfigError("rmae_study: need at least one lag and one factor count");
  const DifferenceReturnPanel d = difference_returns(panel);
  RmaeResult out;
  out.validation_rows = draw_validation_rows(boundaries, draws_per_year, seed);
  if (out.validation_rows.empty()) throw DataError("rmae_study: empty validation set");

  int max_d = 0;
  for (int dv : d_values) max_d = std::max(max_d, dv);
  const Eigen::MatrixXd factors =
      rmae_factors(panel, d, source, max_d, out.validation_rows, long_run);
  const int have_d = static_cast<int>(factors.cols());
  const double dn = d.grid.delta_n;
  const int m = d.n_cols();

  for (int lag : lags) {
    if (lag < 0 || lag >= m) throw ConfigError("rmae_study: lag out of range");
    // sum of squared factor loadings per row, cumulative in the factor index
    std::vector<std::vector<double>> ratio_per_d(d_values.size());
    for (const int row : out.validation_rows) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
      for (int j = 0; j + lag < m; ++j) w(j) = d.values.row(row).segment(j, lag + 1).sum();
      const double norm_sq = w.squaredNorm() * dn;
      const Eigen::VectorXd coef = factors.transpose() * w * dn;  // <w, f_i> in L^2
      double cum = 0.0;
      size_t di = 0;
      std::vector<double> residual(d_values.size(), 0.0);
      for (int i = 0; i < have_d; ++i) {
        cum += coef(i) * coef(i);
        while (di < d_values.size() && d_values[di] == i + 1) {
          residual[di] = std::max(0.0, norm_sq - cum);
          ++di;
        }
      }
      for (; di < d_values.size(); ++di) residual[di] = std::max(0.0, norm_sq - cum);
      for (size_t k = 0; k < d_values.size(); ++k)
        ratio_per_d[k].push_back(norm_sq > 0.0 ? std::sqrt(residual[k] / norm_sq) : 0.0);
    }
    for (size_t k = 0; k < d_values.size(); ++k) {
      RmaeRow row;
      row.lag = lag;
      row.source = to_string(source);
      row.d = d_values[k];
      double acc = 0.0;
      for (double v : ratio_per_d[k]) acc += v;
      row.rmae = acc / ratio_per_d[k].size();
      out.rows.push_back(row);
    }
  }
  return out;
}

}  // namespace termcov
