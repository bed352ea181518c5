#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <vector>

#include "termcov/errors.hpp"
#include "termcov/panels.hpp"
#include "termcov/step_kernel.hpp"
#include "termcov/util.hpp"

namespace termcov {

/// Contiguous block of difference-return rows an estimator works on.
struct RowRange {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
};

inline RowRange full_range(const DifferenceReturnPanel& d) { return {0, d.n_rows()}; }

inline void require_valid_range(const DifferenceReturnPanel& d, const RowRange& r, const char* what) {
  if (r.begin < 0 || r.end > d.n_rows() || r.begin >= r.end)
    throw DataError(std::string(what) + ": empty or out-of-range row range");
}

enum class GKind { L2Norm, Mahalanobis };

/// Parameters of the functional-outlyingness norm: leading eigenpairs of a
/// (rescaled) preliminary covariation estimate plus the summed tail mass.
struct MahalanobisSpec {
  int d = 0;
  Eigen::VectorXd eigenvalues;  // d leading operator eigenvalues, descending
  Eigen::MatrixXd heights;      // m_cells x d eigenfunction cell heights
  double tail_mass = 0.0;       // sum of the remaining eigenvalues
  // Alternate reading of the leading term with lambda_i^2 in the denominator.
  // Off by default: only the single-lambda form is chi^2_d calibrated.
  bool squared_lambda_denominator = false;
};

struct TruncationSpec {
  GKind g_kind = GKind::L2Norm;
  double u_n = std::numeric_limits<double>::infinity();
  double l = std::numeric_limits<double>::infinity();
  double w_exponent = 0.49;
  MahalanobisSpec mahalanobis;  // used when g_kind == Mahalanobis

  void validate() const {
    if (!(u_n > 0.0)) throw ConfigError("truncation: u_n must be positive");
    if (!(w_exponent > 0.0 && w_exponent < 0.5))
      throw ConfigError("truncation: w_exponent must lie in (0, 0.5)");
    if (g_kind == GKind::Mahalanobis) {
      if (mahalanobis.d < 1) throw ConfigError("truncation: Mahalanobis d must be >= 1");
      if (mahalanobis.eigenvalues.size() != mahalanobis.d ||
          mahalanobis.heights.cols() != mahalanobis.d)
        throw ConfigError("truncation: Mahalanobis spec dimensions inconsistent");
      if (mahalanobis.eigenvalues.minCoeff() <= 0.0)
        throw ConfigError("truncation: Mahalanobis leading eigenvalues must be positive");
      if (!(mahalanobis.tail_mass > 0.0))
        throw ConfigError("truncation: Mahalanobis tail mass must be positive");
    }
  }
};

/// g_n = ||.||_{l^2} applied to row / delta_n.
inline double g_l2(const Eigen::Ref<const Eigen::VectorXd>& row, double delta_n) {
  return row.norm() / delta_n;
}

/// Mahalanobis-style truncation value. The row is embedded as the step
/// function p_n(row / delta_n); then
///   g^2 = sum_{i<=d} <h, e_i>^2 / lambda_i + ||(I - P_d) h||^2 / tail_mass.
/// For increments with covariance delta_n * sum lambda_i e_i (x) e_i this
/// gives E[g^2] ~ delta_n (d + 1).
inline double g_mahalanobis(const Eigen::Ref<const Eigen::VectorXd>& row,
                            const MahalanobisSpec& spec, double delta_n) {
  if (spec.d < 1 || spec.eigenvalues.size() < spec.d)
    throw ConfigError("g_mahalanobis: invalid spec");
  for (int i = 0; i < spec.d; ++i)
    if (!(spec.eigenvalues(i) > 0.0))
      throw ConfigError("g_mahalanobis: zero eigenvalue in the leading block");
  if (!(spec.tail_mass > 0.0)) throw ConfigError("g_mahalanobis: tail mass must be positive");
  // <p_n(row/dn), e_i> = sum_j row_j h_{ij} = (row . v_i) / sqrt(dn)
  // for heights h = v / sqrt(dn) with v the unit cell vector.
  const Eigen::VectorXd coef = spec.heights.transpose() * row;
  double lead = 0.0;
  for (int i = 0; i < spec.d; ++i) {
    const double li = spec.eigenvalues(i);
    lead += coef(i) * coef(i) / (spec.squared_lambda_denominator ? li * li : li);
  }
  const double total_sq = row.squaredNorm() / delta_n;
  const double tail_sq = std::max(0.0, total_sq - coef.squaredNorm());
  return std::sqrt(lead + tail_sq / spec.tail_mass);
}

inline double g_value(const Eigen::Ref<const Eigen::VectorXd>& row, const TruncationSpec& spec,
                      double delta_n) {
  return spec.g_kind == GKind::L2Norm ? g_l2(row, delta_n)
                                      : g_mahalanobis(row, spec.mahalanobis, delta_n);
}

/// 75%-kept l^2 preliminary covariation, rescaled by rho*.
struct PreliminaryEstimate {
  StepKernel kernel;           // rho*-rescaled, delta_n^{-2}-scaled, divided by period length
  double rho_star = 1.0;
  double kept_fraction = 0.0;
  std::vector<int> kept_rows;  // absolute row indices
  bool degenerate_iqr = false; // zero IQR: rescaling skipped with rho* = 1
  // spectrum of the *rescaled* kernel, all nonzero eigenvalues
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd heights;     // m_cells x k
  double trace = 0.0;          // operator trace of the rescaled kernel
};

/// Step (i) of the data-driven rule: keep the 75% of rows with the smallest
/// l^2 norms (nearest-rank cut), form the delta_n^{-2}-scaled Gram kernel of
/// the kept rows divided by the period length, and rescale by
///   rho* = (q_.75 - q_.25)^2 / (4 Phi^{-1}(.75)^2 delta_n lambda_1)
/// where the quartiles are of the first-eigenfunction projections
/// <p_n(d_i / delta_n), e_1> over all rows. A zero IQR is flagged and leaves
/// the kernel unscaled.
inline PreliminaryEstimate preliminary_estimate(const DifferenceReturnPanel& d, RowRange range) {
  require_valid_range(d, range, "preliminary_estimate");
  const int n = range.size();
  if (n < 8) throw DataError("preliminary_estimate: need at least 8 rows for quartiles");
  const int m = d.n_cols();
  const double dn = d.grid.delta_n;
  const double period_len = n * dn;

  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) norms[i] = g_l2(d.values.row(range.begin + i).transpose(), dn);
  const double cut = quantile_nearest_rank(norms, 0.75);

  PreliminaryEstimate out;
  for (int i = 0; i < n; ++i)
    if (norms[i] <= cut) out.kept_rows.push_back(range.begin + i);
  out.kept_fraction = static_cast<double>(out.kept_rows.size()) / n;

  Eigen::MatrixXd kept(out.kept_rows.size(), m);
  for (size_t r = 0; r < out.kept_rows.size(); ++r) kept.row(r) = d.values.row(out.kept_rows[r]);

  // Operator eigenpairs of the kept-row Gram kernel via the thin SVD:
  // lambda_i = sigma_i^2 / (delta_n * period_len), heights = v_i / sqrt(dn).
  Eigen::BDCSVD<Eigen::MatrixXd> svd(kept, Eigen::ComputeThinV);
  const Eigen::VectorXd sing = svd.singularValues();
  const int k = static_cast<int>(sing.size());
  Eigen::VectorXd lambda(k);
  for (int i = 0; i < k; ++i) lambda(i) = sing(i) * sing(i) / (dn * period_len);
  if (!(lambda(0) > 0.0)) throw DataError("preliminary_estimate: leading eigenvalue is not positive");
  Eigen::MatrixXd heights = svd.matrixV() / std::sqrt(dn);
  for (int i = 0; i < k; ++i) {
    int arg = 0;
    heights.col(i).cwiseAbs().maxCoeff(&arg);
    if (heights(arg, i) < 0.0) heights.col(i) = -heights.col(i);
  }

  // NIQR rescaling from the projections <p_n(row/dn), e_1> of all rows.
  std::vector<double> proj(n);
  const Eigen::VectorXd v1 = heights.col(0);
  for (int i = 0; i < n; ++i) proj[i] = d.values.row(range.begin + i).dot(v1);
  const double iqr = quantile(proj, 0.75) - quantile(proj, 0.25);
  if (iqr > 0.0) {
    out.rho_star = (iqr * iqr) / (4.0 * kProbit75 * kProbit75 * dn * lambda(0));
  } else {
    out.rho_star = 1.0;
    out.degenerate_iqr = true;
  }

  Eigen::MatrixXd values = (out.rho_star / (dn * dn * period_len)) * (kept.transpose() * kept);
  out.kernel = make_step_kernel(dn, std::move(values));
  out.eigenvalues = out.rho_star * lambda;
  out.heights = std::move(heights);
  out.trace = out.rho_star * (kept.squaredNorm() / (dn * period_len));
  return out;
}

struct RuleBuildResult {
  TruncationSpec spec;
  PreliminaryEstimate preliminary;
  int d = 0;
  bool l2_fallback = false;  // tail mass was not positive
};

/// Step (ii): d explains `explained` of the preliminary trace, the
/// Mahalanobis spec takes the top-d eigenpairs and the tail mass, and the
/// threshold is u_n = l sqrt(d+1) delta_n^w. A non-positive tail mass falls
/// back to the plain l^2 norm with the same threshold.
inline RuleBuildResult build_rule(const DifferenceReturnPanel& d, RowRange range, double l,
                                  double explained = 0.90, double w_exponent = 0.49) {
  if (!(l > 0.0)) throw ConfigError("build_rule: l must be positive");
  if (!(explained > 0.0 && explained < 1.0))
    throw ConfigError("build_rule: explained fraction must lie in (0,1)");
  RuleBuildResult out;
  out.preliminary = preliminary_estimate(d, range);
  const auto& prelim = out.preliminary;

  const double total = prelim.eigenvalues.sum();
  double cum = 0.0;
  int dim = static_cast<int>(prelim.eigenvalues.size());
  for (int i = 0; i < prelim.eigenvalues.size(); ++i) {
    cum += std::max(0.0, prelim.eigenvalues(i));
    if (cum / total > explained) {
      dim = i + 1;
      break;
    }
  }
  out.d = dim;

  const double dn = d.grid.delta_n;
  TruncationSpec spec;
  spec.l = l;
  spec.w_exponent = w_exponent;
  spec.u_n = std::isinf(l) ? std::numeric_limits<double>::infinity()
                           : l * std::sqrt(dim + 1.0) * std::pow(dn, w_exponent);

  const double tail = prelim.trace - prelim.eigenvalues.head(dim).sum();
  if (tail > 0.0 && prelim.eigenvalues(std::min<int>(dim - 1, prelim.eigenvalues.size() - 1)) > 0.0) {
    spec.g_kind = GKind::Mahalanobis;
    spec.mahalanobis.d = dim;
    spec.mahalanobis.eigenvalues = prelim.eigenvalues.head(dim);
    spec.mahalanobis.heights = prelim.heights.leftCols(dim);
    spec.mahalanobis.tail_mass = tail;
  } else {
    spec.g_kind = GKind::L2Norm;
    out.l2_fallback = true;
  }
  if (!std::isinf(spec.u_n)) spec.validate();
  out.spec = spec;
  return out;
}

inline RuleBuildResult build_rule(const DifferenceReturnPanel& d, double l,
                                  double explained = 0.90, double w_exponent = 0.49) {
  return build_rule(d, full_range(d), l, explained, w_exponent);
}

}  // namespace termcov
