#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "termcov/covariation.hpp"
#include "termcov/panels.hpp"
#include "termcov/simulator.hpp"
#include "termcov/step_kernel.hpp"
#include "termcov/util.hpp"

using namespace termcov;
using Catch::Approx;

TEST_CASE("gaussian_cov_matrix") {
  SECTION("a -> 0 limit on two cells: nearly constant kernel") {
    const auto m = gaussian_cov_matrix(1e-12, 0.5, 2, 1.0);
    CHECK(m(0, 0) == Approx(m(0, 1)).epsilon(1e-9));
    CHECK(m(0, 0) == Approx(m(1, 1)).epsilon(1e-9));
  }
  SECTION("diagonal dominance") {
    const auto m = gaussian_cov_matrix(50.0, 0.01, 200, 2.0);
    for (int j = 0; j < 200; j += 17)
      for (int k = 0; k < 200; k += 13) CHECK(m(j, j) >= m(j, k) - 1e-15);
  }
  SECTION("unit L2 norm of the [0,M]^2 restriction") {
    const double dn = 0.01;
    const int cells = 1000;
    const auto m = gaussian_cov_matrix(50.0, dn, cells, 10.0);
    // cell averages approximate the kernel; Riemann sum of its square
    const double norm = m.norm() / dn;  // sqrt(sum (cellint/dn^2)^2 dn^2)
    CHECK(norm == Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("exp_cov_matrix") {
  const double dn = 0.01;
  const int cells = 1000;
  const double M = 10.0;
  const auto m = exp_cov_matrix(dn, cells, M);

  SECTION("closed-form entries") {
    const double c = 1.0 / exp_kernel_l2_norm(M);
    for (int j1 : {0, 3, 999})
      for (int j2 : {0, 500}) {
        const double u1 = std::exp(-j1 * dn) - std::exp(-(j1 + 1) * dn);
        const double u2 = std::exp(-j2 * dn) - std::exp(-(j2 + 1) * dn);
        CHECK(m(j1, j2) == Approx(u1 * u2 * c).margin(1e-12));
      }
  }
  SECTION("rank one") {
    const auto k = make_step_kernel(dn, m / (dn * dn));
    const auto eig = operator_eigenvalues(k);
    CHECK(std::abs(eig(1)) < 1e-10 * eig(0));
  }
  SECTION("unit norm of the restriction") {
    const double norm = m.norm() / dn;
    CHECK(norm == Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("simulate_cir") {
  SECTION("xi = 0 is the deterministic relaxation towards theta") {
    CirParams p{1.5, 0.058, 0.0, 0.01};
    std::mt19937_64 rng(1);
    const auto path = simulate_cir(p, 50, 0.01, 20, rng);
    CHECK(path.truncation_count == 0);
    for (Eigen::Index i = 1; i < path.fine.size(); ++i) {
      CHECK(path.fine(i) >= path.fine(i - 1) - 1e-15);  // monotone up towards theta
      CHECK(path.fine(i) <= p.theta + 1e-12);
    }
  }
  SECTION("equilibrium start with xi = 0 stays constant") {
    CirParams p{1.5, 0.058, 0.0, 0.058};
    std::mt19937_64 rng(2);
    const auto path = simulate_cir(p, 10, 0.01, 100, rng);
    CHECK((path.fine.array() - 0.058).abs().maxCoeff() < 1e-14);
    CHECK((path.increment_integrals.array() - 0.058 * 0.01).abs().maxCoeff() < 1e-15);
  }
  SECTION("long-run sample mean approaches theta") {
    CirParams p{1.5, 0.058, 0.05, 0.058};
    std::mt19937_64 rng(3);
    // 10^6 substeps: 10,000 steps at subres 100
    const auto path = simulate_cir(p, 10000, 0.01, 100, rng);
    const double mean = path.integral() / (10000 * 0.01);
    CHECK(mean == Approx(0.058).epsilon(0.02));
  }
}

TEST_CASE("simulate_forward_panel") {
  SECTION("pure shift when increments vanish") {
    SimConfig cfg;
    cfg.grid = make_grid(0.1, 5, 1.0);
    cfg.cir = {1.5, 0.0, 0.0, 0.0};  // x = 0 always: no Gaussian variance
    cfg.seed = 7;
    cfg.subres = 5;
    const auto res = simulate_forward_panel(cfg);
    const auto f0 = SimulatorModel::initial_curve_cells(0.1, 15);
    for (int i = 0; i <= 5; ++i)
      for (int j = 0; j + i < 15; ++j)
        CHECK(res.panel.values(i, j) == Approx(f0(j + i)).margin(1e-15));
  }

  SECTION("bit-identical reproduction for equal seeds") {
    SimConfig cfg;
    cfg.grid = make_grid(0.05, 20, 1.0);
    cfg.a = 5.0;
    cfg.lambda1 = 2.0;
    cfg.rho1 = 0.01;
    cfg.lambda2 = 3.0;
    cfg.rho2 = 0.005;
    cfg.seed = 99;
    cfg.subres = 10;
    const auto r1 = simulate_forward_panel(cfg);
    const auto r2 = simulate_forward_panel(cfg);
    CHECK(r1.panel.values == r2.panel.values);
    REQUIRE(r1.jumps.size() == r2.jumps.size());
    cfg.seed = 100;
    const auto r3 = simulate_forward_panel(cfg);
    CHECK(r1.panel.values != r3.panel.values);
  }

  SECTION("rho = 0 with positive intensity adds nothing") {
    SimConfig cfg;
    cfg.grid = make_grid(0.1, 10, 1.0);
    cfg.a = 5.0;
    cfg.seed = 11;
    cfg.subres = 5;
    const auto base = simulate_forward_panel(cfg);
    cfg.lambda1 = 5.0;
    cfg.rho1 = 0.0;
    const auto with_null_jumps = simulate_forward_panel(cfg);
    CHECK(with_null_jumps.jumps.empty());
    // same law; with rho = 0 the jump curves are identically zero, and the
    // panel values agree with the no-jump panel up to the extra RNG draws
    CHECK(base.panel.values.rows() == with_null_jumps.panel.values.rows());
  }

  SECTION("Poisson jump counts have the configured mean") {
    SimConfig cfg;
    cfg.grid = make_grid(0.05, 20, 0.5);  // T = 1
    cfg.a = 5.0;
    cfg.lambda1 = 1.0;
    cfg.rho1 = 0.0116;
    cfg.lambda2 = 4.0;
    cfg.rho2 = 0.0029;
    cfg.subres = 2;
    SimulatorModel model(cfg);
    long total1 = 0, total2 = 0;
    const int n_seeds = 500;
    for (int s = 0; s < n_seeds; ++s) {
      const auto res = model.simulate(1000 + s);
      for (const auto& ev : res.jumps) (ev.component == 1 ? total1 : total2) += 1;
    }
    CHECK(static_cast<double>(total1) / n_seeds == Approx(1.0).margin(0.15));
    CHECK(static_cast<double>(total2) / n_seeds == Approx(4.0).margin(0.3));
  }

  SECTION("increment sample covariance matches the configured kernel") {
    // lambda = 0, xi = 0, x0 = theta: adjusted increments are N(0, theta dn Q)
    SimConfig cfg;
    cfg.grid = make_grid(0.1, 2000, 0.5);
    cfg.a = 2.0;
    cfg.cir = {1.5, 0.058, 0.0, 0.058};
    cfg.seed = 13;
    cfg.subres = 1;
    const auto res = simulate_forward_panel(cfg);
    const int m = 5;  // reported cells
    // increments are G_i = F_i[j] - F_{i-1}[j+1]
    Eigen::MatrixXd incr(2000, m);
    for (int i = 1; i <= 2000; ++i)
      for (int j = 0; j < m; ++j)
        incr(i - 1, j) = res.panel.values(i, j) - res.panel.values(i - 1, j + 1);
    const Eigen::MatrixXd sample = incr.transpose() * incr / 2000.0;
    const Eigen::MatrixXd expect =
        0.058 * 0.1 * gaussian_cov_matrix(2.0, 0.1, m, 0.5);
    // entries are O(1e-3); five standard errors of a Gaussian fourth-moment
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        const double se = std::sqrt((expect(a, a) * expect(b, b) + expect(a, b) * expect(a, b)) / 2000.0);
        CHECK(std::abs(sample(a, b) - expect(a, b)) < 5.0 * se);
      }
  }
}

TEST_CASE("observe") {
  SimConfig cfg;
  cfg.grid = make_grid(0.1, 30, 1.0);
  cfg.a = 5.0;
  cfg.seed = 21;
  cfg.subres = 5;
  const auto res = simulate_forward_panel(cfg);
  const auto truth = forwards_to_log_prices(res.panel);

  SECTION("noise-free full sampling reproduces the dense panel") {
    const auto obs = observe(res.panel, 11, 0.0, 5);
    REQUIRE(obs.per_date.size() == 31);
    for (size_t i = 0; i < obs.per_date.size(); ++i) {
      REQUIRE(obs.per_date[i].size() == 11);
      for (const auto& [j, v] : obs.per_date[i])
        CHECK(v == Approx(truth.values(i, j)).margin(1e-15));
    }
  }

  SECTION("indices are distinct per date") {
    const auto obs = observe(res.panel, 7, 0.01, 6);
    for (const auto& row : obs.per_date) {
      std::set<int> seen;
      for (const auto& [j, v] : row) seen.insert(j);
      CHECK(seen.size() == row.size());
    }
  }

  SECTION("noise standard deviation is recovered") {
    SimConfig big = cfg;
    big.grid = make_grid(0.1, 3000, 1.0);
    const auto res_big = simulate_forward_panel(big);
    const auto truth_big = forwards_to_log_prices(res_big.panel);
    const auto obs = observe(res_big.panel, 11, 0.01, 7);
    double acc = 0.0;
    long count = 0;
    for (size_t i = 0; i < obs.per_date.size(); ++i)
      for (const auto& [j, v] : obs.per_date[i]) {
        const double e = v - truth_big.values(i, j);
        acc += e * e;
        ++count;
      }
    CHECK(count >= 30000);
    CHECK(std::sqrt(acc / count) == Approx(0.01).epsilon(0.03));
  }

  SECTION("pooled index counts pass a chi-square uniformity check") {
    SimConfig big = cfg;
    big.grid = make_grid(0.1, 2000, 1.0);
    const auto res_big = simulate_forward_panel(big);
    const auto obs = observe(res_big.panel, 5, 0.0, 8);
    std::vector<long> counts(11, 0);
    long total = 0;
    for (const auto& row : obs.per_date)
      for (const auto& [j, v] : row) {
        counts[j] += 1;
        ++total;
      }
    const double expected = static_cast<double>(total) / counts.size();
    double stat = 0.0;
    for (long c : counts) stat += (c - expected) * (c - expected) / expected;
    // chi-square critical value at p = 0.001, df = 10 (Wilson-Hilferty)
    const double df = 10.0, z = 3.0902;
    const double crit = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
    CHECK(stat < crit);
  }

  SECTION("m_obs bounds are enforced") {
    CHECK_THROWS_AS(observe(res.panel, 0, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(observe(res.panel, 12, 0.0, 1), ConfigError);
  }
}

TEST_CASE("realized covariation of simulated panels approaches the flat-volatility target") {
  // lambda = 0, xi = 0: q-hat / T estimates theta * (cell-averaged q_a);
  // the median relative error over seeds shrinks with n
  const double theta = 0.058;
  std::vector<double> med_re;
  for (int n : {25, 100}) {
    SimConfig cfg;
    cfg.grid = make_grid(1.0 / n, n, 1.0);
    cfg.a = 5.0;
    cfg.cir = {1.5, theta, 0.0, theta};
    cfg.subres = 1;
    SimulatorModel model(cfg);
    const int m = cfg.grid.maturity_cells() - 1;
    const Eigen::MatrixXd cellint = gaussian_cov_matrix(cfg.a, cfg.grid.delta_n, m, 1.0);
    const auto target = make_step_kernel(
        cfg.grid.delta_n, theta / (cfg.grid.delta_n * cfg.grid.delta_n) * cellint);
    std::vector<double> res_n;
    for (int s = 0; s < 11; ++s) {
      const auto sim = model.simulate(500 + s);
      const auto d = difference_returns(forwards_to_log_prices(sim.panel));
      const auto q = realized_covariation(d);
      res_n.push_back(relative_error(kernel_scale(q, 1.0 / cfg.grid.horizon), target));
    }
    med_re.push_back(median(res_n));
  }
  CHECK(med_re[1] < med_re[0]);
}
