#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "termcov/covariation.hpp"
#include "termcov/errors.hpp"
#include "termcov/panels.hpp"
#include "termcov/parallel.hpp"
#include "termcov/presmooth.hpp"
#include "termcov/simulator.hpp"
#include "termcov/step_kernel.hpp"
#include "termcov/truncation.hpp"
#include "termcov/util.hpp"

namespace termcov {

inline constexpr std::array<double, 4> kDimensionThresholds{0.85, 0.90, 0.95, 0.99};

enum class Scenario { S1, S2 };

inline std::string to_string(Scenario s) { return s == Scenario::S1 ? "S1" : "S2"; }

/// One Monte-Carlo model: simulator configuration, pipeline scenario, and the
/// truncation levels to evaluate. An empty l list runs the untruncated
/// estimator only.
struct McModel {
  std::string name;
  SimConfig sim;
  Scenario scenario = Scenario::S1;
  std::vector<double> l_values;  // finite entries use the data-driven rule
  int projection_dims = 3;       // S2: log prices projected onto this many PCs
  bool observe_and_smooth = false;  // sparse/noisy pipeline with presmoothing
};

/// Canonical study models on a given grid. m1/m3 are dense and noise-free,
/// m2/m4 observe 100 of the grid points with noise 0.01 and presmooth;
/// m3/m4 add both jump components.
inline McModel canonical_model(const std::string& name, const GridSpec& grid) {
  McModel m;
  m.name = name;
  m.sim.grid = grid;
  m.sim.a = 50.0;
  if (name == "M1" || name == "M2") {
    m.l_values = {};
  } else if (name == "M3" || name == "M4") {
    m.sim.lambda1 = 1.0;
    m.sim.rho1 = 0.0116;
    m.sim.lambda2 = 4.0;
    m.sim.rho2 = 0.0029;
    m.l_values = {3.0, 4.0, 5.0};
  } else {
    throw ConfigError("canonical_model: unknown model " + name);
  }
  if (name == "M2" || name == "M4") {
    m.sim.m_obs = 100;
    m.sim.sigma_eps = 0.01;
    m.observe_and_smooth = true;
  }
  return m;
}

struct McCell {
  std::string model;
  std::string scenario;
  double l = std::numeric_limits<double>::infinity();
  double re_median = 0, re_q1 = 0, re_q3 = 0;
  std::array<double, 4> d_median{}, d_q1{}, d_q3{};
  int replications = 0;
  double wall_seconds = 0.0;
};

struct McRepRecord {
  std::string model;
  std::string scenario;
  double l;
  int rep;
  double re;
  std::array<int, 4> dims;
};

struct McResult {
  std::vector<McCell> cells;
  std::vector<McRepRecord> reps;
};

namespace detail {

struct RepOutcome {
  std::vector<double> re;                // one per l-variant
  std::vector<std::array<int, 4>> dims;
};

/// Full single-replication pipeline: simulate, optionally observe+presmooth,
/// optionally project onto 3 PCs, difference returns, estimate per l, and
/// score rE against the realized integrated volatility plus the explained
/// dimensions at the four thresholds.
inline RepOutcome run_replication(const McModel& model, const SimulatorModel& sim_model,
                                  const Eigen::MatrixXd& iv_cellint, uint64_t rep_seed) {
  const auto res = sim_model.simulate(rep_seed);
  LogBondPanel panel;
  if (model.observe_and_smooth) {
    const auto obs = observe(res.panel, model.sim.m_obs, model.sim.sigma_eps,
                             splitmix64(rep_seed ^ 0x0b5e7fULL));
    panel = presmooth(obs, model.sim.grid);
  } else {
    panel = forwards_to_log_prices(res.panel);
  }
  if (model.scenario == Scenario::S2) panel = project_onto_pcs(panel, model.projection_dims);

  const DifferenceReturnPanel d = difference_returns(panel);
  const double dn = d.grid.delta_n;

  StepKernel iv = make_step_kernel(dn, (res.cir.integral() / (dn * dn)) * iv_cellint);

  const bool jumps = model.sim.lambda1 > 0.0 || model.sim.lambda2 > 0.0;
  std::vector<double> l_variants = model.l_values;
  if (l_variants.empty()) l_variants.push_back(std::numeric_limits<double>::infinity());

  // The rule's preliminary step does not depend on l; build once, rethreshold.
  RuleBuildResult rule;
  bool have_rule = false;
  RepOutcome out;
  for (double l : l_variants) {
    StepKernel estimate;
    if (!std::isfinite(l) || !jumps) {
      estimate = realized_covariation(d);
    } else {
      if (!have_rule) {
        rule = build_rule(d, l);
        have_rule = true;
      }
      TruncationSpec spec = rule.spec;
      spec.l = l;
      spec.u_n = l * std::sqrt(rule.d + 1.0) * std::pow(dn, spec.w_exponent);
      estimate = truncated_covariation(d, spec).truncated_kernel;
    }
    out.re.push_back(relative_error(estimate, iv));
    const Eigen::VectorXd eig = operator_eigenvalues(estimate);
    std::array<int, 4> dims{};
    for (size_t p = 0; p < kDimensionThresholds.size(); ++p)
      dims[p] = explained_dimension(eig, kDimensionThresholds[p]);
    out.dims.push_back(dims);
  }
  return out;
}

}  // namespace detail

/// Monte-Carlo study over the given models. Replication r of model m always
/// uses the same derived seed, so results are independent of the thread
/// count. A failed replication aborts with model/replication/seed context.
inline McResult mc_run(const std::vector<McModel>& models, int replications, uint64_t master_seed,
                       unsigned threads = 0) {
  if (replications < 1) throw ConfigError("mc_run: replications must be >= 1");
  McResult result;
  for (size_t mi = 0; mi < models.size(); ++mi) {
    const McModel& model = models[mi];
    const auto start = std::chrono::steady_clock::now();
    const SimulatorModel sim_model(model.sim);

    // IV target on the difference-return cell grid: realized int x(s) ds
    // times the cell-averaged normalized kernel (scaling applied per rep).
    const int m_cells = model.sim.grid.maturity_cells() - 1;
    const Eigen::MatrixXd iv_cellint = gaussian_cov_matrix(
        model.sim.a, model.sim.grid.delta_n, m_cells, model.sim.grid.max_maturity);

    std::vector<detail::RepOutcome> outcomes(replications);
    parallel_for(replications, threads, [&](std::size_t rep) {
      const uint64_t seed = splitmix64(master_seed ^ splitmix64(mi * 0x10001ULL) ^ (rep + 1));
      try {
        outcomes[rep] = detail::run_replication(model, sim_model, iv_cellint, seed);
      } catch (const std::exception& e) {
        throw NumericalError("mc_run: model " + model.name + " replication " +
                             std::to_string(rep) + " (seed " + std::to_string(seed) +
                             ") failed: " + e.what());
      }
    });
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::vector<double> l_variants = model.l_values;
    if (l_variants.empty()) l_variants.push_back(std::numeric_limits<double>::infinity());
    for (size_t li = 0; li < l_variants.size(); ++li) {
      McCell cell;
      cell.model = model.name;
      cell.scenario = to_string(model.scenario);
      cell.l = l_variants[li];
      cell.replications = replications;
      cell.wall_seconds = wall;
      std::vector<double> re(replications);
      std::array<std::vector<double>, 4> dims;
      for (auto& v : dims) v.resize(replications);
      for (int rep = 0; rep < replications; ++rep) {
        re[rep] = outcomes[rep].re[li];
        for (int p = 0; p < 4; ++p) dims[p][rep] = outcomes[rep].dims[li][p];
        result.reps.push_back({model.name, cell.scenario, cell.l, rep, re[rep],
                               outcomes[rep].dims[li]});
      }
      cell.re_median = quantile(re, 0.5);
      cell.re_q1 = quantile(re, 0.25);
      cell.re_q3 = quantile(re, 0.75);
      for (int p = 0; p < 4; ++p) {
        // dimensions are integer counts: report order statistics
        cell.d_median[p] = quantile_nearest_rank(dims[p], 0.5);
        cell.d_q1[p] = quantile_nearest_rank(dims[p], 0.25);
        cell.d_q3[p] = quantile_nearest_rank(dims[p], 0.75);
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

}  // namespace termcov
