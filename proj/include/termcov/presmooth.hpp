#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "termcov/errors.hpp"
#include "termcov/panels.hpp"
#include "termcov/simulator.hpp"

namespace termcov {
namespace spline {

/// Clamped B-spline basis of a fixed order on [0, x_max] with uniformly
/// spaced interior knots.
class BSplineBasis {
 public:
  static constexpr int kOrder = 6;  // quintic

  BSplineBasis(double x_max, int interior_knots) : x_max_(x_max) {
    if (!(x_max > 0.0)) throw ConfigError("bspline: domain must have positive length");
    if (interior_knots < 0) throw ConfigError("bspline: negative interior knot count");
    n_basis_ = interior_knots + kOrder;
    knots_.resize(interior_knots + 2 * kOrder);
    const double step = x_max / (interior_knots + 1);
    for (int i = 0; i < kOrder; ++i) knots_[i] = 0.0;
    for (int i = 1; i <= interior_knots; ++i) knots_[kOrder - 1 + i] = i * step;
    for (int i = 0; i < kOrder; ++i) knots_[kOrder + interior_knots + i] = x_max;
  }

  int size() const { return n_basis_; }

  /// Nonzero basis values and derivatives up to `max_deriv` at x
  /// (NURBS-book A2.3). Returns the first active basis index; out(r, j) is
  /// the r-th derivative of basis (first + j).
  int derivatives(double x, int max_deriv, Eigen::MatrixXd& out) const {
    x = std::clamp(x, 0.0, x_max_);
    const int span = find_span(x);
    const int k = kOrder;
    Eigen::MatrixXd ndu(k, k);
    std::vector<double> left(k), right(k);
    ndu(0, 0) = 1.0;
    for (int j = 1; j < k; ++j) {
      left[j] = x - knots_[span + 1 - j];
      right[j] = knots_[span + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        ndu(j, r) = right[r + 1] + left[j - r];
        const double temp = ndu(r, j - 1) / ndu(j, r);
        ndu(r, j) = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      ndu(j, j) = saved;
    }
    out.setZero(max_deriv + 1, k);
    for (int j = 0; j < k; ++j) out(0, j) = ndu(j, k - 1);
    Eigen::MatrixXd a(2, k);
    for (int r = 0; r < k; ++r) {
      int s1 = 0, s2 = 1;
      a.setZero();
      a(0, 0) = 1.0;
      for (int d = 1; d <= max_deriv; ++d) {
        double val = 0.0;
        const int rk = r - d, pk = k - 1 - d;
        if (r >= d) {
          a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
          val = a(s2, 0) * ndu(rk, pk);
        }
        const int j1 = (rk >= -1) ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? d - 1 : k - 1 - r;
        for (int j = j1; j <= j2; ++j) {
          a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
          val += a(s2, j) * ndu(rk + j, pk);
        }
        if (r <= pk) {
          a(s2, d) = -a(s1, d - 1) / ndu(pk + 1, r);
          val += a(s2, d) * ndu(r, pk);
        }
        out(d, r) = val;
        std::swap(s1, s2);
      }
    }
    double factor = k - 1;
    for (int d = 1; d <= max_deriv; ++d) {
      for (int j = 0; j < k; ++j) out(d, j) *= factor;
      factor *= k - 1 - d;
    }
    return span - k + 1;
  }

  /// Penalty matrix int B'''_i B'''_j dx, assembled with 3-point
  /// Gauss-Legendre per knot interval (exact for the quartic integrand).
  Eigen::MatrixXd third_derivative_penalty() const {
    static const double nodes[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    static const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n_basis_, n_basis_);
    Eigen::MatrixXd ders;
    for (size_t s = kOrder - 1; s + kOrder < knots_.size(); ++s) {
      const double lo = knots_[s], hi = knots_[s + 1];
      if (hi <= lo) continue;
      const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      for (int q = 0; q < 3; ++q) {
        const int first = derivatives(mid + half * nodes[q], 3, ders);
        const double w = weights[q] * half;
        for (int i = 0; i < kOrder; ++i)
          for (int j = 0; j < kOrder; ++j)
            omega(first + i, first + j) += w * ders(3, i) * ders(3, j);
      }
    }
    return omega;
  }

  Eigen::MatrixXd design(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(x.size(), n_basis_);
    Eigen::MatrixXd ders;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const int first = derivatives(x(i), 0, ders);
      for (int j = 0; j < kOrder; ++j) b(i, first + j) = ders(0, j);
    }
    return b;
  }

 private:
  int find_span(double x) const {
    const int k = kOrder;
    const int hi = n_basis_;  // knots_[hi] starts the clamped tail
    if (x >= knots_[hi]) return hi - 1;
    int span = k - 1;
    while (span + 1 < hi && x >= knots_[span + 1]) ++span;
    return span;
  }

  double x_max_;
  int n_basis_ = 0;
  std::vector<double> knots_;
};

struct PenalizedFit {
  Eigen::VectorXd coef;
  double lambda = 0.0;
  double bic = 0.0;
  double dof = 0.0;
};

/// Penalized least squares with the smoothing parameter chosen by BIC,
/// BIC(lambda) = m log(RSS/m) + log(m) df(lambda), over a log-spaced grid.
inline PenalizedFit fit_penalized(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
                                  const Eigen::VectorXd& y, int n_candidates = 30) {
  const auto m = design.rows();
  const Eigen::MatrixXd btb = design.transpose() * design;
  const Eigen::VectorXd bty = design.transpose() * y;
  const double scale = btb.trace() / std::max(penalty.trace(), 1e-300);
  PenalizedFit best;
  best.bic = std::numeric_limits<double>::infinity();
  for (int c = 0; c < n_candidates; ++c) {
    const double expo = -9.0 + 12.0 * c / (n_candidates - 1.0);
    const double lambda = scale * std::pow(10.0, expo);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(btb + lambda * penalty);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd coef = ldlt.solve(bty);
    const double rss = (y - design * coef).squaredNorm();
    const double dof = ldlt.solve(btb).trace();
    const double bic = m * std::log(std::max(rss, 1e-300) / m) + std::log(static_cast<double>(m)) * dof;
    if (bic < best.bic) {
      best.coef = coef;
      best.lambda = lambda;
      best.bic = bic;
      best.dof = dof;
    }
  }
  if (!best.coef.size()) throw NumericalError("fit_penalized: no candidate produced a solvable system");
  return best;
}

}  // namespace spline

/// Quintic penalized-spline recovery of dense log-price curves from sparse
/// noisy observations: ceil(m_obs/4) uniform interior knots, third-derivative
/// roughness penalty, BIC-selected smoothing parameter; the fitted curve is
/// re-anchored so that the zero-maturity log price is exactly 0.
inline LogBondPanel presmooth(const ObservationSet& obs, const GridSpec& grid) {
  const int n_points = grid.maturity_cells() + 1;
  LogBondPanel out;
  out.grid = grid;
  out.values.resize(obs.per_date.size(), n_points);

  Eigen::VectorXd grid_x(n_points);
  for (int j = 0; j < n_points; ++j) grid_x(j) = j * grid.delta_n;

  int cached_m = -1;
  std::unique_ptr<spline::BSplineBasis> basis;
  Eigen::MatrixXd penalty, grid_design;

  for (size_t i = 0; i < obs.per_date.size(); ++i) {
    const auto& row = obs.per_date[i];
    const int m = static_cast<int>(row.size());
    if (m < spline::BSplineBasis::kOrder + 2)
      throw DataError("presmooth: too few observations at date " + std::to_string(i));
    if (m != cached_m) {
      basis = std::make_unique<spline::BSplineBasis>(grid.max_maturity, (m + 3) / 4);
      penalty = basis->third_derivative_penalty();
      grid_design = basis->design(grid_x);
      cached_m = m;
    }
    Eigen::VectorXd x(m), y(m);
    for (int l = 0; l < m; ++l) {
      x(l) = row[l].first * grid.delta_n;
      y(l) = row[l].second;
    }
    const auto fit = spline::fit_penalized(basis->design(x), penalty, y);
    Eigen::VectorXd fitted = grid_design * fit.coef;
    out.values.row(i) = (fitted.array() - fitted(0)).transpose();
  }
  return out;
}

}  // namespace termcov
