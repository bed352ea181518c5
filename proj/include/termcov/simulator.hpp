#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "termcov/errors.hpp"
#include "termcov/grid.hpp"
#include "termcov/panels.hpp"
#include "termcov/util.hpp"

namespace termcov {

struct CirParams {
  double kappa = 1.5;
  double theta = 0.058;
  double xi = 0.05;
  double x0 = 0.058;
};

/// Forward-curve model: volatility Sigma_s = x(s) Q_a with a CIR factor x,
/// plus two compound-Poisson jump components. Component 1 draws rare, large
/// curves from N(0, rho1 * K), K proportional to e^{-(x+y)}; component 2
/// draws more frequent, smaller curves from N(0, rho2 * Q_{0.01}).
struct SimConfig {
  double a = 50.0;        // Gaussian kernel bandwidth (50 high-dim, 5 low-dim)
  double lambda1 = 0.0;   // jumps per year, component 1
  double lambda2 = 0.0;   // jumps per year, component 2
  double rho1 = 0.0;      // covariance scale, component 1
  double rho2 = 0.0;      // covariance scale, component 2
  CirParams cir;
  GridSpec grid;
  int m_obs = 0;              // observations per date; 0 = dense panel, no observation step
  double sigma_eps = 0.0;     // observation noise standard deviation
  int subres = 100;           // CIR substeps per delta_n
  uint64_t seed = 0;
  // Intra-interval roll-down factor e^{-(dn - tau)} on component-1 jump
  // curves; an O(dn) effect, off by default.
  bool semigroup_jump_adjust = false;

  void validate() const {
    if (!(a > 0.0)) throw ConfigError("sim: a must be positive");
    if (lambda1 < 0 || lambda2 < 0 || rho1 < 0 || rho2 < 0)
      throw ConfigError("sim: rates and covariance scales must be nonnegative");
    if (subres < 1) throw ConfigError("sim: subres must be >= 1");
    if (m_obs < 0 || m_obs > grid.maturity_cells() + 1)
      throw ConfigError("sim: m_obs exceeds the maturity grid");
    if (sigma_eps < 0) throw ConfigError("sim: sigma_eps must be nonnegative");
  }
};

// ---------------------------------------------------------------------------
// Covariance cell integrals
// ---------------------------------------------------------------------------

/// ||exp(-a(x-y)^2)||_{L^2([0,M]^2)}, closed form via erf.
inline double gaussian_kernel_l2_norm(double a, double max_maturity) {
  const double M = max_maturity;
  const double s = std::sqrt(2.0 * a);
  const double norm_sq =
      2.0 * M * std::sqrt(M_PI / (8.0 * a)) * std::erf(s * M) - (1.0 - std::exp(-2.0 * a * M * M)) / (2.0 * a);
  return std::sqrt(norm_sq);
}

/// Cell integrals of the normalized Gaussian kernel q_a over an n_cells grid
/// (2x2 Gauss-Legendre per cell pair, Toeplitz in the cell offset). The
/// normalization makes the restriction of q_a to [0, norm_maturity]^2 have
/// unit L^2 norm.
inline Eigen::MatrixXd gaussian_cov_matrix(double a, double delta_n, int n_cells,
                                           double norm_maturity) {
  if (!(a > 0.0)) throw ConfigError("gaussian_cov_matrix: a must be positive");
  const double h = 0.5 * delta_n / std::sqrt(3.0);  // 2-point GL offsets around the midpoint
  const double w = 0.5 * delta_n;                   // per-node weight
  Eigen::VectorXd toeplitz(n_cells);
  for (int k = 0; k < n_cells; ++k) {
    const double base = k * delta_n;  // offset between cell midpoints
    double acc = 0.0;
    for (int u = -1; u <= 1; u += 2)
      for (int v = -1; v <= 1; v += 2) {
        const double diff = base + (u - v) * h;
        acc += std::exp(-a * diff * diff);
      }
    toeplitz(k) = acc * w * w;
  }
  const double norm = gaussian_kernel_l2_norm(a, norm_maturity);
  Eigen::MatrixXd out(n_cells, n_cells);
  for (int i = 0; i < n_cells; ++i)
    for (int j = 0; j < n_cells; ++j) out(i, j) = toeplitz(std::abs(i - j)) / norm;
  return out;
}

/// Cell integrals of e^{-x} on the maturity grid; the exponential-product
/// kernel is rank one, c * u u^T.
inline Eigen::VectorXd exp_cell_integrals(double delta_n, int n_cells) {
  Eigen::VectorXd u(n_cells);
  for (int j = 0; j < n_cells; ++j)
    u(j) = std::exp(-j * delta_n) - std::exp(-(j + 1) * delta_n);
  return u;
}

inline double exp_kernel_l2_norm(double max_maturity) {
  return (1.0 - std::exp(-2.0 * max_maturity)) / 2.0;
}

/// Cell integrals of the normalized kernel k(x,y) = e^{-(x+y)} / ||.||.
inline Eigen::MatrixXd exp_cov_matrix(double delta_n, int n_cells, double norm_maturity) {
  const Eigen::VectorXd u = exp_cell_integrals(delta_n, n_cells);
  return (u * u.transpose()) / exp_kernel_l2_norm(norm_maturity);
}

// ---------------------------------------------------------------------------
// CIR factor
// ---------------------------------------------------------------------------

struct CirPath {
  Eigen::VectorXd fine;                 // x on the substep lattice, size n_steps*subres + 1
  Eigen::VectorXd increment_integrals;  // I_i = int_{(i-1)dn}^{i dn} x(s) ds, size n_steps
  long truncation_count = 0;            // negative proposals floored at zero
  double integral() const { return increment_integrals.sum(); }
  double terminal() const { return fine(fine.size() - 1); }
};

/// Full-truncation Euler on the substep lattice; increment integrals are
/// left-endpoint Riemann sums over each delta_n step.
inline CirPath simulate_cir(const CirParams& p, int n_steps, double delta_n, int subres,
                            std::mt19937_64& rng) {
  if (n_steps < 1 || subres < 1) throw ConfigError("simulate_cir: bad lattice");
  const double dt = delta_n / subres;
  const double sqrt_dt = std::sqrt(dt);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CirPath out;
  out.fine.resize(static_cast<Eigen::Index>(n_steps) * subres + 1);
  out.increment_integrals = Eigen::VectorXd::Zero(n_steps);
  double x = p.x0;
  out.fine(0) = x;
  Eigen::Index pos = 0;
  for (int i = 0; i < n_steps; ++i) {
    double integral = 0.0;
    for (int k = 0; k < subres; ++k) {
      const double xp = std::max(x, 0.0);
      integral += xp * dt;
      double next = x + p.kappa * (p.theta - xp) * dt + p.xi * std::sqrt(xp) * sqrt_dt * gauss(rng);
      if (next < 0.0) {
        next = 0.0;
        ++out.truncation_count;
      }
      x = next;
      out.fine(++pos) = x;
    }
    out.increment_integrals(i) = integral;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward panel simulation
// ---------------------------------------------------------------------------

struct JumpEvent {
  int step = 0;       // 1-based time step the jump lands in
  int component = 0;  // 1 or 2
  Eigen::VectorXd curve_cells;  // cell integrals over the reported maturity window
  double l2_norm = 0.0;         // L^2(0,M) norm of the jump's cell-average step function
};

struct ForwardSimResult {
  ForwardPanel panel;
  CirPath cir;
  std::vector<JumpEvent> jumps;
};

/// Precomputed per-configuration state: covariance factors over the internal
/// grid (maturity cells + shift headroom) and the initial curve. Building
/// the Gaussian factor costs one dense eigendecomposition; reuse it across
/// replications.
class SimulatorModel {
 public:
  explicit SimulatorModel(SimConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto& g = cfg_.grid;
    n_internal_ = g.maturity_cells() + g.n_steps;
    gauss_factor_ = covariance_factor(
        gaussian_cov_matrix(cfg_.a, g.delta_n, n_internal_, g.max_maturity));
    if (cfg_.lambda1 > 0.0 && cfg_.rho1 > 0.0) {
      jump1_u_ = exp_cell_integrals(g.delta_n, n_internal_);
      jump1_scale_ = std::sqrt(cfg_.rho1 / exp_kernel_l2_norm(g.max_maturity));
    }
    if (cfg_.lambda2 > 0.0 && cfg_.rho2 > 0.0)
      jump2_factor_ = covariance_factor(
          cfg_.rho2 * gaussian_cov_matrix(0.01, g.delta_n, n_internal_, g.max_maturity));
    f0_ = initial_curve_cells(g.delta_n, n_internal_);
  }

  const SimConfig& config() const { return cfg_; }
  int internal_cells() const { return n_internal_; }

  /// Upward-sloping initial curve f_0(x) = 0.04 + 0.02 (1 - e^{-x}); the
  /// estimators never see it (they act on adjusted increments only).
  static Eigen::VectorXd initial_curve_cells(double delta_n, int n_cells) {
    Eigen::VectorXd f0(n_cells);
    for (int j = 0; j < n_cells; ++j)
      f0(j) = 0.06 * delta_n - 0.02 * (std::exp(-j * delta_n) - std::exp(-(j + 1) * delta_n));
    return f0;
  }

  ForwardSimResult simulate(uint64_t seed) const { return simulate_impl(seed, cfg_.cir.x0); }

  /// Same model with the CIR factor started at x0; used to chain consecutive
  /// periods through a continuous volatility path.
  ForwardSimResult simulate(uint64_t seed, double x0) const { return simulate_impl(seed, x0); }

 private:
  /// L with L L^T = C for a symmetric PSD matrix; eigenvalue square root with
  /// negative roundoff clipped at zero.
  static Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success)
      throw NumericalError("covariance_factor: eigensolver failed");
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal();
  }

  ForwardSimResult simulate_impl(uint64_t seed, double x0) const {
    const auto& g = cfg_.grid;
    const int m_report = g.maturity_cells();
    const int n = g.n_steps;
    std::mt19937_64 rng(splitmix64(seed));

    CirParams cir = cfg_.cir;
    cir.x0 = x0;
    ForwardSimResult out;
    out.cir = simulate_cir(cir, n, g.delta_n, cfg_.subres, rng);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n + 1, n_internal_);
    F.row(0) = f0_.transpose();
    Eigen::VectorXd z(n_internal_), incr(n_internal_);
    for (int i = 1; i <= n; ++i) {
      for (int j = 0; j < n_internal_; ++j) z(j) = gauss(rng);
      incr.noalias() = std::sqrt(std::max(out.cir.increment_integrals(i - 1), 0.0)) * (gauss_factor_ * z);

      if (cfg_.lambda1 > 0.0) {
        std::poisson_distribution<int> pois(cfg_.lambda1 * g.delta_n);
        const int count = pois(rng);
        for (int c = 0; c < count; ++c) {
          double scale = jump1_scale_ * gauss(rng);
          if (cfg_.semigroup_jump_adjust) scale *= std::exp(-(1.0 - unif(rng)) * g.delta_n);
          if (cfg_.rho1 > 0.0) {
            Eigen::VectorXd curve = scale * jump1_u_;
            record_jump(out, i, 1, curve, m_report, g.delta_n);
            incr += curve;
          }
        }
      }
      if (cfg_.lambda2 > 0.0) {
        std::poisson_distribution<int> pois(cfg_.lambda2 * g.delta_n);
        const int count = pois(rng);
        for (int c = 0; c < count; ++c) {
          if (cfg_.rho2 > 0.0) {
            Eigen::VectorXd zj(n_internal_);
            for (int j = 0; j < n_internal_; ++j) zj(j) = gauss(rng);
            Eigen::VectorXd curve = jump2_factor_ * zj;
            record_jump(out, i, 2, curve, m_report, g.delta_n);
            incr += curve;
          }
        }
      }

      const int valid = n_internal_ - i;
      F.row(i).head(valid) = F.row(i - 1).segment(1, valid) + incr.head(valid).transpose();
    }

    out.panel.grid = g;
    out.panel.values = std::move(F);
    return out;
  }

  static void record_jump(ForwardSimResult& out, int step, int component,
                          const Eigen::VectorXd& curve, int m_report, double delta_n) {
    JumpEvent ev;
    ev.step = step;
    ev.component = component;
    ev.curve_cells = curve.head(m_report);
    ev.l2_norm = ev.curve_cells.norm() / std::sqrt(delta_n);
    out.jumps.push_back(std::move(ev));
  }

  SimConfig cfg_;
  int n_internal_ = 0;
  Eigen::MatrixXd gauss_factor_;
  Eigen::MatrixXd jump2_factor_;
  Eigen::VectorXd jump1_u_;
  double jump1_scale_ = 0.0;
  Eigen::VectorXd f0_;
};

/// One-shot convenience wrapper; for repeated draws build a SimulatorModel
/// once and call simulate per seed.
inline ForwardSimResult simulate_forward_panel(const SimConfig& cfg) {
  return SimulatorModel(cfg).simulate(cfg.seed);
}

// ---------------------------------------------------------------------------
// Observation scheme
// ---------------------------------------------------------------------------

/// Sparse noisy log-price observations: per date, m_obs distinct maturity
/// indices drawn uniformly without replacement, values contaminated with
/// i.i.d. N(0, sigma_eps^2) noise.
struct ObservationSet {
  GridSpec grid;
  std::vector<std::vector<std::pair<int, double>>> per_date;  // (maturity index, noisy log price)
};

inline ObservationSet observe(const ForwardPanel& f, int m_obs, double sigma_eps, uint64_t seed) {
  const int n_points = f.grid.maturity_cells() + 1;
  if (m_obs < 1 || m_obs > n_points)
    throw ConfigError("observe: m_obs must lie in [1, maturity count + 1]");
  const LogBondPanel p = forwards_to_log_prices(f);
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);

  ObservationSet out;
  out.grid = f.grid;
  out.per_date.resize(p.values.rows());
  std::vector<int> pool(n_points);
  for (Eigen::Index i = 0; i < p.values.rows(); ++i) {
    for (int j = 0; j < n_points; ++j) pool[j] = j;
    // partial Fisher-Yates: first m_obs entries are a uniform sample
    for (int k = 0; k < m_obs; ++k) {
      std::uniform_int_distribution<int> pick(k, n_points - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    std::vector<int> idx(pool.begin(), pool.begin() + m_obs);
    std::sort(idx.begin(), idx.end());
    auto& row = out.per_date[i];
    row.reserve(m_obs);
    for (int j : idx) {
      const double noise = sigma_eps > 0.0 ? sigma_eps * gauss(rng) : 0.0;
      row.emplace_back(j, p.values(i, j) + noise);
    }
  }
  return out;
}

}  // namespace termcov
