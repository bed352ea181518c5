#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "termcov/panels.hpp"
#include "termcov/simulator.hpp"
#include "termcov/util.hpp"

using namespace termcov;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

}  // namespace

TEST_CASE("yields_to_log_prices on flat and zero curves") {
  const auto grid = make_grid(1.0, 3, 4.0);
  YieldPanel y;
  y.grid = grid;
  y.values = Eigen::MatrixXd::Zero(4, 5);
  CHECK(yields_to_log_prices(y).values.isZero(0));

  y.values.setConstant(0.05);
  const auto p = yields_to_log_prices(y);
  CHECK(p.values(1, 2) == Approx(-0.10));
  CHECK(p.values(0, 0) == 0.0);
}

TEST_CASE("yields_to_log_prices round-trips through its algebraic inverse") {
  const auto grid = make_grid(0.25, 5, 2.0);
  YieldPanel y;
  y.grid = grid;
  y.values = random_matrix(6, 9, 7, 0.03);
  y.values.col(0).setZero();
  const auto p = yields_to_log_prices(y);
  const auto back = log_prices_to_yields(p);
  CHECK((back.values - y.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("yields_to_log_prices rejects non-finite input with coordinates") {
  YieldPanel y;
  y.grid = make_grid(1.0, 1, 2.0);
  y.values = Eigen::MatrixXd::Zero(2, 3);
  y.values(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(yields_to_log_prices(y),
                    Catch::Matchers::ContainsSubstring("row 1") &&
                        Catch::Matchers::ContainsSubstring("col 2"));
}

TEST_CASE("forwards_to_log_prices constant curve and inverse map") {
  const auto grid = make_grid(0.5, 4, 3.0);
  ForwardPanel f;
  f.grid = grid;

  SECTION("zero forwards give zero prices") {
    f.values = Eigen::MatrixXd::Zero(5, 8);
    CHECK(forwards_to_log_prices(f).values.isZero(0));
  }

  SECTION("constant cell integrals accumulate linearly") {
    f.values = Eigen::MatrixXd::Constant(5, 8, 0.01);
    const auto p = forwards_to_log_prices(f);
    for (int j = 0; j <= grid.maturity_cells(); ++j) CHECK(p.values(2, j) == Approx(-0.01 * j));
  }

  SECTION("column differences of -P recover F") {
    f.values = random_matrix(5, 8, 11, 0.02);
    const auto p = forwards_to_log_prices(f);
    for (int i = 0; i < 5; ++i)
      for (int j = 1; j <= grid.maturity_cells(); ++j)
        CHECK(-(p.values(i, j) - p.values(i, j - 1)) == Approx(f.values(i, j - 1)).margin(1e-12));
  }

  SECTION("insufficient maturity columns are rejected") {
    f.values = Eigen::MatrixXd::Zero(5, grid.maturity_cells() - 1);
    CHECK_THROWS_AS(forwards_to_log_prices(f), DataError);
  }
}

TEST_CASE("difference_returns hand-computed 2x3 example") {
  LogBondPanel p;
  p.grid = make_grid(1.0, 1, 2.0);
  p.values.resize(2, 3);
  p.values << 0.0, -1.0, -2.1,
              0.0, -1.05, -2.2;
  const auto d = difference_returns(p);
  REQUIRE(d.n_rows() == 1);
  REQUIRE(d.n_cols() == 1);
  // P[2][1] - P[1][2] - P[2][0] + P[1][1] in 1-based date indexing
  CHECK(d.values(0, 0) == Approx(-1.05 - (-2.1) - 0.0 + (-1.0)));
}

TEST_CASE("difference_returns annihilates a_i + c*j panels") {
  const auto grid = make_grid(0.1, 9, 1.0);
  LogBondPanel p;
  p.grid = grid;
  p.values.resize(10, 11);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g;
  const double c = 0.37;
  for (int i = 0; i < 10; ++i) {
    const double a_i = g(rng);
    for (int j = 0; j <= 10; ++j) p.values(i, j) = a_i + c * j;
  }
  const auto d = difference_returns(p);
  CHECK(d.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("difference_returns is invariant under per-date constants") {
  const auto grid = make_grid(0.1, 5, 1.0);
  LogBondPanel p;
  p.grid = grid;
  p.values = random_matrix(6, 11, 13, 0.5);
  const auto d0 = difference_returns(p);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  for (int i = 0; i < 6; ++i) p.values.row(i).array() += g(rng);
  const auto d1 = difference_returns(p);
  CHECK((d0.values - d1.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("difference returns equal adjusted forward increments on simulated panels") {
  // roll-down identity: d_i(j) = F[i][j+1] - F[i+1][j] (0-based rows = dates)
  SimConfig cfg;
  cfg.grid = make_grid(0.05, 10, 1.0);
  cfg.a = 5.0;
  cfg.seed = 2024;
  cfg.subres = 10;
  const auto res = simulate_forward_panel(cfg);
  const auto p = forwards_to_log_prices(res.panel);
  const auto d = difference_returns(p);
  double max_err = 0.0;
  for (int r = 0; r < d.n_rows(); ++r)
    for (int c = 0; c < d.n_cols(); ++c) {
      const int j = c + 1;  // 1-based maturity index
      const double expect = res.panel.values(r, j) - res.panel.values(r + 1, j - 1);
      max_err = std::max(max_err, std::abs(d.values(r, c) - expect));
    }
  CHECK(max_err < 1e-10);
}

TEST_CASE("difference_returns rejects too-small panels") {
  LogBondPanel p;
  p.grid = make_grid(1.0, 1, 2.0);
  p.values = Eigen::MatrixXd::Zero(1, 3);
  CHECK_THROWS_AS(difference_returns(p), DataError);
  p.values = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(difference_returns(p), DataError);
}

TEST_CASE("higher_order_difference_returns") {
  const auto grid = make_grid(0.1, 7, 1.2);
  DifferenceReturnPanel d;
  d.grid = grid;

  SECTION("lag 0 is the identity") {
    d.values = random_matrix(7, 11, 5);
    const auto out = higher_order_difference_returns(d, 0);
    CHECK((out.values - d.values).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("constant panel sums to lag+1 copies") {
    d.values = Eigen::MatrixXd::Constant(7, 11, 1.0);
    const auto out = higher_order_difference_returns(d, 6);
    REQUIRE(out.n_cols() == 5);
    CHECK((out.values.array() - 7.0).abs().maxCoeff() < 1e-14);
  }

  SECTION("random panel matches the brute-force window sum") {
    d.values = random_matrix(7, 11, 21);
    const int lag = 3;
    const auto out = higher_order_difference_returns(d, lag);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j + lag < 11; ++j) {
        double acc = 0.0;
        for (int l = 0; l <= lag; ++l) acc += d.values(i, j + l);
        CHECK(out.values(i, j) == Approx(acc).margin(1e-12));
      }
  }

  SECTION("composition matches a single wider window") {
    d.values = random_matrix(7, 11, 31);
    const auto once = higher_order_difference_returns(d, 5);
    const auto twice = higher_order_difference_returns(higher_order_difference_returns(d, 2), 3);
    CHECK((once.values - twice.values).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("excessive lag is rejected") {
    d.values = random_matrix(7, 11, 41);
    CHECK_THROWS_AS(higher_order_difference_returns(d, 11), DataError);
  }
}

TEST_CASE("project_onto_pcs") {
  const auto grid = make_grid(0.25, 7, 2.0);

  SECTION("full dimension reproduces the increments") {
    LogBondPanel p;
    p.grid = grid;
    p.values = random_matrix(8, 9, 17, 0.1);
    const auto out = project_onto_pcs(p, 9);
    CHECK((out.values - p.values).cwiseAbs().maxCoeff() < 1e-10);
  }

  SECTION("increments in a 2-dim subspace are reproduced at d = 2") {
    Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(9, 0.0, 1.0);
    Eigen::VectorXd v(9);
    for (int j = 0; j < 9; ++j) v(j) = std::sin(0.7 * j);
    LogBondPanel p;
    p.grid = grid;
    p.values.resize(8, 9);
    p.values.row(0).setZero();
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g;
    for (int i = 1; i < 8; ++i)
      p.values.row(i) = p.values.row(i - 1) + (g(rng) * u + g(rng) * v).transpose();
    const auto out = project_onto_pcs(p, 2);
    CHECK((out.values - p.values).cwiseAbs().maxCoeff() < 1e-10);
  }

  SECTION("rank-3 panel projected to d = 1 leaves the tail singular mass") {
    Eigen::MatrixXd dirs = random_matrix(3, 9, 23);
    Eigen::MatrixXd coef = random_matrix(30, 3, 29);
    Eigen::MatrixXd incr = coef * dirs;
    LogBondPanel p;
    p.grid = grid;
    p.values.resize(31, 9);
    p.values.row(0).setZero();
    for (int i = 1; i < 31; ++i) p.values.row(i) = p.values.row(i - 1) + incr.row(i - 1);

    const auto out = project_onto_pcs(p, 1);
    Eigen::MatrixXd out_incr = out.values.bottomRows(30) - out.values.topRows(30);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(incr);
    const auto& s = svd.singularValues();
    const double tail = std::sqrt(s.tail(s.size() - 1).squaredNorm());
    CHECK((incr - out_incr).norm() == Approx(tail).epsilon(1e-8));
  }

  SECTION("d above the rank projects onto the full span") {
    LogBondPanel p;
    p.grid = grid;
    p.values = random_matrix(4, 9, 37, 0.1);  // increment rank 3 < 8
    const auto out = project_onto_pcs(p, 8);
    CHECK((out.values - p.values).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THROWS_AS(project_onto_pcs(p, 10), ConfigError);
  }
}
