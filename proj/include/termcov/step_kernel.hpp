#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>

#include "termcov/errors.hpp"

namespace termcov {

/// Piecewise-constant symmetric kernel on [0, M]^2 with M = m_cells * delta_n.
/// values(j1, j2) is the kernel value on cell [(j1)dn,(j1+1)dn] x [(j2)dn,(j2+1)dn]
/// (0-based cells). Producers bake any delta_n^{-2} scaling into the values,
/// so a covariation kernel is directly comparable to [X,X] on the grid.
///
/// The associated integral operator, restricted to step functions, has matrix
/// delta_n * values in the orthonormal cell basis 1_cell / sqrt(delta_n).
struct StepKernel {
  double delta_n = 0.0;
  int m_cells = 0;
  Eigen::MatrixXd values;

  double max_maturity() const { return delta_n * m_cells; }
};

/// Eigenvalues (descending) and eigenfunctions of the kernel operator.
/// Column i of `heights` holds the cell heights of the i-th eigenfunction;
/// the functions are orthonormal in L^2[0, M].
struct SpectralDecomposition {
  double delta_n = 0.0;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd heights;  // m_cells x k
};

namespace detail {
inline double relative_asymmetry(const Eigen::MatrixXd& a) {
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}
}  // namespace detail

/// Validates and symmetrizes; asymmetry beyond 1e-10 relative is rejected.
inline StepKernel make_step_kernel(double delta_n, Eigen::MatrixXd values,
                                   double asym_tol = 1e-10) {
  if (!(delta_n > 0.0)) throw ConfigError("step_kernel: delta_n must be positive");
  if (values.rows() != values.cols() || values.rows() == 0)
    throw DataError("step_kernel: values must be square and nonempty");
  if (!values.allFinite()) throw DataError("step_kernel: non-finite values");
  if (detail::relative_asymmetry(values) > asym_tol)
    throw DataError("step_kernel: asymmetry exceeds tolerance");
  StepKernel k;
  k.delta_n = delta_n;
  k.m_cells = static_cast<int>(values.rows());
  k.values = 0.5 * (values + values.transpose());
  return k;
}

inline void require_same_grid(const StepKernel& a, const StepKernel& b, const char* what) {
  if (a.m_cells != b.m_cells || std::abs(a.delta_n - b.delta_n) > 1e-12 * a.delta_n)
    throw DataError(std::string(what) + ": kernel grids do not match");
}

/// ||k||_{L^2([0,M]^2)} = delta_n * Frobenius norm of the value matrix;
/// equals the Hilbert-Schmidt norm of the associated operator.
inline double hs_norm(const StepKernel& k) { return k.delta_n * k.values.norm(); }

inline StepKernel kernel_sum(const StepKernel& a, const StepKernel& b, double wa = 1.0, double wb = 1.0) {
  require_same_grid(a, b, "kernel_sum");
  StepKernel out = a;
  out.values = wa * a.values + wb * b.values;
  return out;
}

inline StepKernel kernel_scale(const StepKernel& a, double w) {
  StepKernel out = a;
  out.values *= w;
  return out;
}

/// rE(k1, k2) = ||k1 - k2|| / ||k2|| in L^2([0,M]^2).
inline double relative_error(const StepKernel& k1, const StepKernel& k2) {
  require_same_grid(k1, k2, "relative_error");
  const double denom = hs_norm(k2);
  if (denom == 0.0) throw DataError("relative_error: reference kernel has zero norm");
  return k1.delta_n * (k1.values - k2.values).norm() / denom;
}

/// Full spectrum of the operator delta_n * values; eigenfunction sign is
/// fixed so the largest-magnitude cell height is positive.
inline SpectralDecomposition eigendecompose(const StepKernel& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k.delta_n * k.values);
  if (solver.info() != Eigen::Success)
    throw NumericalError("eigendecompose: eigensolver failed to converge");
  const int m = k.m_cells;
  SpectralDecomposition out;
  out.delta_n = k.delta_n;
  out.eigenvalues.resize(m);
  out.heights.resize(m, m);
  const double inv_sqrt_dn = 1.0 / std::sqrt(k.delta_n);
  for (int i = 0; i < m; ++i) {
    const int src = m - 1 - i;  // Eigen sorts ascending
    out.eigenvalues(i) = solver.eigenvalues()(src);
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.heights.col(i) = v * inv_sqrt_dn;
  }
  return out;
}

/// Eigenvalues only, descending.
inline Eigen::VectorXd operator_eigenvalues(const StepKernel& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k.delta_n * k.values,
                                                        Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericalError("operator_eigenvalues: eigensolver failed to converge");
  return solver.eigenvalues().reverse();
}

namespace detail {
/// Shared tail of explained_dimension once the Rayleigh quotients are known.
/// Tiny negatives (estimation noise) are clipped to zero; anything below
/// -1e-8 * lambda_1 means the kernel is not positive and is rejected.
inline int explained_dimension_from_loadings(Eigen::VectorXd loadings, double p) {
  const double top = loadings.size() > 0 ? loadings.maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < loadings.size(); ++i) {
    if (loadings(i) < -1e-8 * std::max(top, 0.0))
      throw DataError("explained_dimension: kernel is not positive semidefinite");
    if (loadings(i) < 0.0) loadings(i) = 0.0;
  }
  const double total = loadings.sum();
  if (!(total > 0.0)) throw DataError("explained_dimension: non-positive trace");
  double cum = 0.0;
  for (Eigen::Index i = 0; i < loadings.size(); ++i) {
    cum += loadings(i);
    if (cum / total > p) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(loadings.size());
}
}  // namespace detail

/// D(p): minimal d such that the top-d basis directions carry a fraction > p
/// of the trace. With no basis supplied the kernel's own eigenbasis is used
/// and the loadings are the eigenvalues; otherwise they are the Rayleigh
/// quotients <e_i, T_k e_i> over the supplied L^2-orthonormal heights.
inline int explained_dimension(const StepKernel& k, double p,
                               const Eigen::MatrixXd* basis_heights = nullptr) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("explained_dimension: p must be in (0,1)");
  Eigen::VectorXd loadings;
  if (basis_heights == nullptr) {
    loadings = operator_eigenvalues(k);
  } else {
    if (basis_heights->rows() != k.m_cells)
      throw DataError("explained_dimension: basis height count does not match the kernel grid");
    const double dn2 = k.delta_n * k.delta_n;
    loadings.resize(basis_heights->cols());
    for (Eigen::Index i = 0; i < basis_heights->cols(); ++i) {
      const Eigen::VectorXd e = basis_heights->col(i);
      loadings(i) = dn2 * e.dot(k.values * e);
    }
  }
  return detail::explained_dimension_from_loadings(std::move(loadings), p);
}

inline int explained_dimension(const SpectralDecomposition& spec, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("explained_dimension: p must be in (0,1)");
  return detail::explained_dimension_from_loadings(spec.eigenvalues, p);
}

inline int explained_dimension(const Eigen::VectorXd& descending_loadings, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("explained_dimension: p must be in (0,1)");
  return detail::explained_dimension_from_loadings(descending_loadings, p);
}

/// Kernel of P T_k P for the projection P onto the span of the supplied
/// orthonormal step functions (heights matrix m_cells x r).
inline StepKernel project_kernel(const StepKernel& k, const Eigen::MatrixXd& basis_heights,
                                 double ortho_tol = 1e-8) {
  if (basis_heights.rows() != k.m_cells)
    throw DataError("project_kernel: basis height count does not match the kernel grid");
  const Eigen::MatrixXd gram = k.delta_n * basis_heights.transpose() * basis_heights;
  const double err = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  if (err > ortho_tol) throw DataError("project_kernel: basis is not orthonormal");
  const double dn2 = k.delta_n * k.delta_n;
  const Eigen::MatrixXd inner = basis_heights.transpose() * k.values * basis_heights;  // <e_a, T_k e_b> / dn^2
  StepKernel out = k;
  out.values = dn2 * basis_heights * inner * basis_heights.transpose();
  out.values = 0.5 * (out.values + out.values.transpose());
  return out;
}

}  // namespace termcov
