#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "termcov/errors.hpp"
#include "termcov/panels.hpp"
#include "termcov/step_kernel.hpp"
#include "termcov/truncation.hpp"

namespace termcov {

/// Realized covariation of difference returns over the selected rows,
/// q(j1,j2) = dn^{-2} sum_i d_i(j1) d_i(j2). The delta_n^{-2} scaling makes
/// the kernel estimate [X,X] on the grid directly.
inline StepKernel realized_covariation(const DifferenceReturnPanel& d, RowRange range) {
  require_valid_range(d, range, "realized_covariation");
  const auto block = d.values.middleRows(range.begin, range.size());
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(d.n_cols(), d.n_cols());
  values.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
  values.triangularView<Eigen::StrictlyUpper>() = values.transpose();
  values /= d.grid.delta_n * d.grid.delta_n;
  return make_step_kernel(d.grid.delta_n, std::move(values));
}

inline StepKernel realized_covariation(const DifferenceReturnPanel& d) {
  return realized_covariation(d, full_range(d));
}

struct CovariationResult {
  StepKernel kernel;            // q-hat, total
  StepKernel truncated_kernel;  // q-hat^-, continuous part
  StepKernel jump_kernel;       // q-hat^+ = q-hat - q-hat^-
  std::vector<int> flagged_rows;  // absolute row indices with g_n(d_i/dn) > u_n
  TruncationSpec spec;
  RowRange rows;
};

/// Truncated covariation: rows with g_n(d_i / delta_n) > u_n are excluded
/// from q^- and listed; q^+ is obtained by subtraction, which is exact.
inline CovariationResult truncated_covariation(const DifferenceReturnPanel& d,
                                               const TruncationSpec& spec, RowRange range) {
  require_valid_range(d, range, "truncated_covariation");
  if (!(spec.u_n > 0.0)) throw ConfigError("truncated_covariation: u_n must be positive");
  if (spec.g_kind == GKind::Mahalanobis) spec.validate();

  const double dn = d.grid.delta_n;
  const int m = d.n_cols();
  CovariationResult out;
  out.spec = spec;
  out.rows = range;
  out.kernel = realized_covariation(d, range);

  std::vector<int> kept;
  kept.reserve(range.size());
  for (int r = range.begin; r < range.end; ++r) {
    const double g = g_value(d.values.row(r).transpose(), spec, dn);
    if (g <= spec.u_n)
      kept.push_back(r);
    else
      out.flagged_rows.push_back(r);
  }

  Eigen::MatrixXd kept_block(kept.size(), m);
  for (size_t r = 0; r < kept.size(); ++r) kept_block.row(r) = d.values.row(kept[r]);
  Eigen::MatrixXd minus = Eigen::MatrixXd::Zero(m, m);
  if (kept_block.rows() > 0) {
    minus.selfadjointView<Eigen::Lower>().rankUpdate(kept_block.transpose());
    minus.triangularView<Eigen::StrictlyUpper>() = minus.transpose();
    minus /= dn * dn;
  }
  out.truncated_kernel = make_step_kernel(dn, std::move(minus));
  out.jump_kernel = kernel_sum(out.kernel, out.truncated_kernel, 1.0, -1.0);
  return out;
}

inline CovariationResult truncated_covariation(const DifferenceReturnPanel& d,
                                               const TruncationSpec& spec) {
  return truncated_covariation(d, spec, full_range(d));
}

using RuleBuilder = std::function<TruncationSpec(const DifferenceReturnPanel&, RowRange)>;

inline RuleBuilder default_rule_builder(double l, double explained = 0.90,
                                        double w_exponent = 0.49) {
  return [l, explained, w_exponent](const DifferenceReturnPanel& d, RowRange r) {
    return build_rule(d, r, l, explained, w_exponent).spec;
  };
}

/// Per-period truncated covariations. Boundaries are row indices
/// b_0 < b_1 < ... < b_K; period k covers rows [b_k, b_{k+1}). The truncation
/// rule is rebuilt from each period's rows only.
inline std::vector<CovariationResult> yearwise_covariations(const DifferenceReturnPanel& d,
                                                            const std::vector<int>& boundaries,
                                                            const RuleBuilder& builder) {
  if (boundaries.size() < 2) throw ConfigError("yearwise_covariations: need at least one period");
  for (size_t k = 0; k + 1 < boundaries.size(); ++k)
    if (boundaries[k] >= boundaries[k + 1])
      throw ConfigError("yearwise_covariations: boundaries must be strictly increasing");
  if (boundaries.front() < 0 || boundaries.back() > d.n_rows())
    throw DataError("yearwise_covariations: boundaries outside the panel");
  std::vector<CovariationResult> out;
  out.reserve(boundaries.size() - 1);
  for (size_t k = 0; k + 1 < boundaries.size(); ++k) {
    const RowRange range{boundaries[k], boundaries[k + 1]};
    if (range.size() < 2) throw DataError("yearwise_covariations: degenerate period (< 2 rows)");
    out.push_back(truncated_covariation(d, builder(d, range), range));
  }
  return out;
}

struct LongRunVolatility {
  StepKernel kernel;                    // arithmetic mean of the per-period kernels
  std::vector<StepKernel> per_period;
};

/// Time-averaged truncated covariations; estimates the stationary volatility
/// kernel when one exists.
inline LongRunVolatility long_time_average(const std::vector<CovariationResult>& results) {
  if (results.empty()) throw ConfigError("long_time_average: need at least one result");
  LongRunVolatility out;
  out.per_period.reserve(results.size());
  for (const auto& r : results) out.per_period.push_back(r.truncated_kernel);
  StepKernel acc = out.per_period.front();
  for (size_t i = 1; i < out.per_period.size(); ++i) acc = kernel_sum(acc, out.per_period[i]);
  out.kernel = kernel_scale(acc, 1.0 / static_cast<double>(results.size()));
  return out;
}

namespace detail {
inline int coord_to_cell(const StepKernel& k, double x, const char* what) {
  if (x < 0.0 || x > k.max_maturity())
    throw DataError(std::string(what) + ": coordinate outside [0, M]");
  int j = static_cast<int>(std::floor(x / k.delta_n));
  return std::min(j, k.m_cells - 1);
}
}  // namespace detail

/// Plug-in estimator of the asymptotic covariance kernel of the CLT:
///   q(x,z,w,y) = T^{-1} (q^-(x,z) q^-(w,y) + q^-(x,w) q^-(z,y)),
/// with q^- already delta_n^{-2}-scaled.
inline double clt_asymptotic_variance(const StepKernel& q_minus, double horizon, double x,
                                      double z, double w, double y) {
  if (!(horizon > 0.0)) throw ConfigError("clt_asymptotic_variance: horizon must be positive");
  const int jx = detail::coord_to_cell(q_minus, x, "clt_asymptotic_variance");
  const int jz = detail::coord_to_cell(q_minus, z, "clt_asymptotic_variance");
  const int jw = detail::coord_to_cell(q_minus, w, "clt_asymptotic_variance");
  const int jy = detail::coord_to_cell(q_minus, y, "clt_asymptotic_variance");
  const auto& v = q_minus.values;
  return (v(jx, jz) * v(jw, jy) + v(jx, jw) * v(jz, jy)) / horizon;
}

/// Variance of entry (x, y): T^{-1} (q^-(x,x) q^-(y,y) + q^-(x,y)^2).
inline double clt_entry_variance(const StepKernel& q_minus, double horizon, double x, double y) {
  return clt_asymptotic_variance(q_minus, horizon, x, y, x, y);
}

}  // namespace termcov
