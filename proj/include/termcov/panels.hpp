#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <string>
#include <vector>

#include "termcov/errors.hpp"
#include "termcov/grid.hpp"

namespace termcov {

/// Continuously compounded yields y[i][j] at date i*delta_n, maturity j*delta_n.
/// Dimensions (n_steps+1) x (maturity_cells+1).
struct YieldPanel {
  GridSpec grid;
  Eigen::MatrixXd values;
  std::vector<std::string> dates;  // optional labels, one per row
};

/// Log zero-coupon bond prices P[i][j] = log P_{i dn}(j dn); column 0 is 0.
struct LogBondPanel {
  GridSpec grid;
  Eigen::MatrixXd values;
  std::vector<std::string> dates;
};

/// Local integrals of the forward curve over maturity cells,
/// F[i][j-1] = <1_[(j-1)dn, j dn], f_{i dn}>, j = 1..internal_cells().
/// Carries shift headroom beyond max_maturity so the roll-down
/// recursion stays exact over the whole horizon.
struct ForwardPanel {
  GridSpec grid;
  Eigen::MatrixXd values;  // (n_steps+1) x internal_cells
  int internal_cells() const { return static_cast<int>(values.cols()); }
};

/// Difference returns d[r][c]: row r is the date pair (r, r+1), column c is
/// maturity index j = c+1. One row per adjacent date pair, so a panel with
/// D dates yields D-1 rows; realized covariations sum over all of them.
struct DifferenceReturnPanel {
  GridSpec grid;
  Eigen::MatrixXd values;  // (n_dates-1) x (maturity_cells-1)
  int n_rows() const { return static_cast<int>(values.rows()); }
  int n_cols() const { return static_cast<int>(values.cols()); }
};

namespace detail {
inline void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        if (!std::isfinite(m(i, j)))
          throw DataError(std::string(what) + ": non-finite value at row " + std::to_string(i) +
                          ", col " + std::to_string(j));
  }
}
}  // namespace detail

/// log P_t(x) = -x * y_t(x) for continuously compounded per-year yields.
inline LogBondPanel yields_to_log_prices(const YieldPanel& y) {
  detail::require_finite(y.values, "yields_to_log_prices");
  LogBondPanel p;
  p.grid = y.grid;
  p.dates = y.dates;
  p.values.resize(y.values.rows(), y.values.cols());
  for (Eigen::Index j = 0; j < y.values.cols(); ++j)
    p.values.col(j) = -(static_cast<double>(j) * y.grid.delta_n) * y.values.col(j);
  p.values.col(0).setZero();
  return p;
}

/// Inverse of yields_to_log_prices; column 0 (zero maturity) yields are set to 0.
inline YieldPanel log_prices_to_yields(const LogBondPanel& p) {
  detail::require_finite(p.values, "log_prices_to_yields");
  YieldPanel y;
  y.grid = p.grid;
  y.dates = p.dates;
  y.values.resize(p.values.rows(), p.values.cols());
  y.values.col(0).setZero();
  for (Eigen::Index j = 1; j < p.values.cols(); ++j)
    y.values.col(j) = -p.values.col(j) / (static_cast<double>(j) * p.grid.delta_n);
  return y;
}

/// log P_t(j dn) = -sum_{k<=j} F[t][k]; exact because F stores cell integrals.
inline LogBondPanel forwards_to_log_prices(const ForwardPanel& f) {
  const int m = f.grid.maturity_cells();
  if (f.internal_cells() < m)
    throw DataError("forwards_to_log_prices: panel has fewer maturity columns than the grid needs");
  LogBondPanel p;
  p.grid = f.grid;
  p.values.resize(f.values.rows(), m + 1);
  p.values.col(0).setZero();
  for (int j = 1; j <= m; ++j) p.values.col(j) = p.values.col(j - 1) - f.values.col(j - 1);
  return p;
}

/// d_i(j) = P[i+1][j] - P[i][j+1] - P[i+1][j-1] + P[i][j], the one-period
/// P&L of buying the (j+1)dn-maturity bond and shorting the j dn one.
/// Invariant under per-date additive constants in P.
inline DifferenceReturnPanel difference_returns(const LogBondPanel& p) {
  const auto rows = p.values.rows();
  const auto cols = p.values.cols();
  if (rows < 2 || cols < 3)
    throw DataError("difference_returns: need at least 2 dates and 3 maturities");
  DifferenceReturnPanel d;
  d.grid = p.grid;
  d.values.resize(rows - 1, cols - 2);
  const auto& P = p.values;
  d.values = P.block(1, 1, rows - 1, cols - 2)    // P[i+1][j]
             - P.block(0, 2, rows - 1, cols - 2)  // P[i][j+1]
             - P.block(1, 0, rows - 1, cols - 2)  // P[i+1][j-1]
             + P.block(0, 1, rows - 1, cols - 2); // P[i][j]
  return d;
}

/// Windowed sum (d_L)_i(j) = sum_{l=0}^{L} d_i(j+l); valid maturity range
/// shrinks by L columns.
inline DifferenceReturnPanel higher_order_difference_returns(const DifferenceReturnPanel& d, int lag) {
  if (lag < 0) throw ConfigError("higher_order_difference_returns: lag must be >= 0");
  if (lag >= d.n_cols())
    throw DataError("higher_order_difference_returns: lag too large for panel");
  DifferenceReturnPanel out;
  out.grid = d.grid;
  out.values = Eigen::MatrixXd::Zero(d.values.rows(), d.values.cols() - lag);
  for (int l = 0; l <= lag; ++l)
    out.values += d.values.block(0, l, d.values.rows(), d.values.cols() - lag);
  return out;
}

/// Top-d right singular vectors of the date-to-date increment matrix,
/// i.e. the eigenvectors of the (uncentered) covariance of first differences.
inline Eigen::MatrixXd log_price_increment_pcs(const LogBondPanel& p, int d) {
  if (p.values.rows() < 2) throw DataError("log_price_increment_pcs: need at least 2 dates");
  Eigen::MatrixXd incr = p.values.bottomRows(p.values.rows() - 1) - p.values.topRows(p.values.rows() - 1);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(incr, Eigen::ComputeThinV);
  const int rank = static_cast<int>(svd.matrixV().cols());
  const int keep = std::min(d, rank);
  return svd.matrixV().leftCols(keep);
}

/// Replaces each date-to-date increment by its projection onto the span of
/// the top-d principal components of the increment covariance, then rebuilds
/// levels by cumulative summation anchored at the first date's curve.
/// d at or above the increment rank leaves the panel unchanged.
inline LogBondPanel project_onto_pcs(const LogBondPanel& p, int d) {
  if (d < 1) throw ConfigError("project_onto_pcs: d must be >= 1");
  if (d > p.values.cols())
    throw ConfigError("project_onto_pcs: d exceeds the maturity count");
  const Eigen::MatrixXd V = log_price_increment_pcs(p, d);
  LogBondPanel out;
  out.grid = p.grid;
  out.dates = p.dates;
  out.values.resize(p.values.rows(), p.values.cols());
  out.values.row(0) = p.values.row(0);
  for (Eigen::Index i = 1; i < p.values.rows(); ++i) {
    Eigen::VectorXd incr = (p.values.row(i) - p.values.row(i - 1)).transpose();
    Eigen::VectorXd proj = V * (V.transpose() * incr);
    out.values.row(i) = out.values.row(i - 1) + proj.transpose();
  }
  return out;
}

}  // namespace termcov
