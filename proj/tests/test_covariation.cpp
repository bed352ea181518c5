#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "termcov/covariation.hpp"
#include "termcov/util.hpp"

using namespace termcov;
using Catch::Approx;

namespace {

DifferenceReturnPanel random_panel(int rows, int cols, uint64_t seed, double scale = 1.0) {
  DifferenceReturnPanel d;
  d.grid = make_grid(0.1, rows, 0.1 * (cols + 1));
  d.values.resize(rows, cols);
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> g(0.0, scale);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) d.values(i, j) = g(rng);
  return d;
}

TruncationSpec l2_spec(double u) {
  TruncationSpec s;
  s.g_kind = GKind::L2Norm;
  s.u_n = u;
  return s;
}

}  // namespace

TEST_CASE("realized_covariation closed forms") {
  SECTION("single unit row with unit delta_n") {
    DifferenceReturnPanel d;
    d.grid = make_grid(1.0, 1, 4.0);
    d.values = Eigen::MatrixXd::Zero(1, 3);
    d.values(0, 0) = 1.0;
    const auto k = realized_covariation(d);
    CHECK(k.values(0, 0) == Approx(1.0));
    CHECK(k.values.cwiseAbs().sum() == Approx(1.0));
  }
  SECTION("two identical rows double the kernel") {
    DifferenceReturnPanel d;
    d.grid = make_grid(1.0, 2, 4.0);
    d.values.resize(2, 3);
    d.values << 1.0, -2.0, 0.5, 1.0, -2.0, 0.5;
    const auto k2 = realized_covariation(d);
    const auto k1 = realized_covariation(d, {0, 1});
    CHECK((k2.values - 2.0 * k1.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("random 5x4 panel matches the brute-force double loop") {
    const auto d = random_panel(5, 4, 17);
    const auto k = realized_covariation(d);
    const double dn2 = d.grid.delta_n * d.grid.delta_n;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        double acc = 0.0;
        for (int i = 0; i < 5; ++i) acc += d.values(i, a) * d.values(i, b);
        CHECK(k.values(a, b) == Approx(acc / dn2).margin(1e-12));
      }
  }
  SECTION("empty range is rejected") {
    const auto d = random_panel(5, 4, 19);
    CHECK_THROWS_AS(realized_covariation(d, {2, 2}), DataError);
    CHECK_THROWS_AS(realized_covariation(d, {0, 9}), DataError);
  }
  SECTION("kernels are positive semidefinite") {
    const auto d = random_panel(6, 5, 23);
    const auto eig = operator_eigenvalues(realized_covariation(d));
    CHECK(eig.minCoeff() > -1e-8 * eig.maxCoeff());
  }
}

TEST_CASE("truncated_covariation thresholds") {
  const auto d = random_panel(10, 4, 29);

  SECTION("infinite threshold keeps everything") {
    const auto res = truncated_covariation(d, l2_spec(std::numeric_limits<double>::infinity()));
    CHECK(res.flagged_rows.empty());
    CHECK((res.kernel.values - res.truncated_kernel.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(hs_norm(res.jump_kernel) == 0.0);
  }

  SECTION("vanishing threshold flags every row") {
    const auto res = truncated_covariation(d, l2_spec(1e-300));
    CHECK(static_cast<int>(res.flagged_rows.size()) == d.n_rows());
    CHECK(hs_norm(res.truncated_kernel) == 0.0);
    CHECK((res.jump_kernel.values - res.kernel.values).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("one inflated row is flagged and the rest match the brute force") {
    auto dd = random_panel(10, 4, 31);
    dd.values.row(3) *= 100.0;
    // threshold between the typical norms and the outlier
    std::vector<double> norms;
    for (int i = 0; i < 10; ++i) norms.push_back(g_l2(dd.values.row(i).transpose(), dd.grid.delta_n));
    std::sort(norms.begin(), norms.end());
    const double u = 0.5 * (norms[8] + norms[9]);
    const auto res = truncated_covariation(dd, l2_spec(u));
    REQUIRE(res.flagged_rows == std::vector<int>{3});
    const double dn2 = dd.grid.delta_n * dd.grid.delta_n;
    Eigen::MatrixXd brute = Eigen::MatrixXd::Zero(4, 4);
    for (int i = 0; i < 10; ++i) {
      if (i == 3) continue;
      brute += dd.values.row(i).transpose() * dd.values.row(i);
    }
    CHECK((res.truncated_kernel.values - brute / dn2).cwiseAbs().maxCoeff() < 1e-10);
  }

  SECTION("q = q^- + q^+ cellwise on every run") {
    for (double u : {0.5, 1.0, 2.0, 5.0}) {
      const auto res = truncated_covariation(d, l2_spec(u));
      const Eigen::MatrixXd sum = res.truncated_kernel.values + res.jump_kernel.values;
      const double scale = std::max(1.0, res.kernel.values.cwiseAbs().maxCoeff());
      CHECK((sum - res.kernel.values).cwiseAbs().maxCoeff() < 1e-10 * scale);
    }
  }

  SECTION("flag sets are nested as u_n rises") {
    const auto res_lo = truncated_covariation(d, l2_spec(4.0));
    const auto res_hi = truncated_covariation(d, l2_spec(8.0));
    for (int r : res_hi.flagged_rows)
      CHECK(std::find(res_lo.flagged_rows.begin(), res_lo.flagged_rows.end(), r) !=
            res_lo.flagged_rows.end());
  }

  SECTION("invalid spec is rejected") {
    CHECK_THROWS_AS(truncated_covariation(d, l2_spec(-1.0)), ConfigError);
  }
}

TEST_CASE("yearwise_covariations") {
  const auto d = random_panel(30, 4, 37);
  const auto builder = [](const DifferenceReturnPanel&, RowRange) { return l2_spec(1e18); };

  SECTION("a single all-covering period equals the full-panel estimate") {
    const auto parts = yearwise_covariations(d, {0, 30}, builder);
    REQUIRE(parts.size() == 1);
    const auto whole = truncated_covariation(d, l2_spec(1e18));
    CHECK((parts[0].kernel.values - whole.kernel.values).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("period kernels sum to the full realized covariation") {
    const auto parts = yearwise_covariations(d, {0, 12, 30}, builder);
    REQUIRE(parts.size() == 2);
    const auto whole = realized_covariation(d);
    const Eigen::MatrixXd sum = parts[0].kernel.values + parts[1].kernel.values;
    const double scale = whole.values.cwiseAbs().maxCoeff();
    CHECK((sum - whole.values).cwiseAbs().maxCoeff() < 1e-10 * scale);
  }

  SECTION("a jump lands only in its own period's flags") {
    auto dd = random_panel(30, 4, 41);
    dd.values.row(15) *= 300.0;  // inside period 2 of [0,10),[10,20),[20,30)
    const auto rule = [](const DifferenceReturnPanel& p, RowRange r) {
      std::vector<double> norms;
      for (int i = r.begin; i < r.end; ++i)
        norms.push_back(g_l2(p.values.row(i).transpose(), p.grid.delta_n));
      std::sort(norms.begin(), norms.end());
      return l2_spec(3.0 * norms[norms.size() / 2]);
    };
    const auto parts = yearwise_covariations(dd, {0, 10, 20, 30}, rule);
    CHECK(parts[0].flagged_rows.empty());
    CHECK(parts[1].flagged_rows == std::vector<int>{15});
    CHECK(parts[2].flagged_rows.empty());
  }

  SECTION("bad boundaries are rejected") {
    CHECK_THROWS_AS(yearwise_covariations(d, {0, 0, 30}, builder), ConfigError);
    CHECK_THROWS_AS(yearwise_covariations(d, {0, 31}, builder), DataError);
    CHECK_THROWS_AS(yearwise_covariations(d, {0, 1, 30}, builder), DataError);
  }
}

TEST_CASE("long_time_average") {
  const auto d = random_panel(20, 4, 43);
  const auto r1 = truncated_covariation(d, l2_spec(1e18), {0, 10});
  const auto r2 = truncated_covariation(d, l2_spec(1e18), {10, 20});

  SECTION("identical inputs average to themselves") {
    const auto avg = long_time_average({r1, r1});
    CHECK((avg.kernel.values - r1.truncated_kernel.values).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("k and -k average to zero") {
    auto neg = r1;
    neg.truncated_kernel.values *= -1.0;
    const auto avg = long_time_average({r1, neg});
    CHECK(avg.kernel.values.cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("mean of the per-period kernels") {
    const auto avg = long_time_average({r1, r2});
    const Eigen::MatrixXd expect = 0.5 * (r1.truncated_kernel.values + r2.truncated_kernel.values);
    CHECK((avg.kernel.values - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(avg.per_period.size() == 2);
  }

  SECTION("grid mismatch is rejected") {
    auto other = random_panel(8, 5, 47);
    const auto r3 = truncated_covariation(other, l2_spec(1e18));
    CHECK_THROWS_AS(long_time_average({r1, r3}), DataError);
  }
}

TEST_CASE("clt_asymptotic_variance plug-in") {
  SECTION("zero kernel gives zero") {
    const auto q = make_step_kernel(0.5, Eigen::MatrixXd::Zero(4, 4));
    CHECK(clt_asymptotic_variance(q, 1.0, 0.1, 0.3, 0.7, 1.1) == 0.0);
  }

  SECTION("hand-computed entry variance") {
    Eigen::MatrixXd v(2, 2);
    v << 2.0, 1.0, 1.0, 3.0;
    const auto q = make_step_kernel(1.0, v);
    // q(x,x)=2, q(y,y)=3, q(x,y)=1, T=1: variance = 2*3 + 1 = 7
    CHECK(clt_entry_variance(q, 1.0, 0.5, 1.5) == Approx(7.0));
    // horizon scaling
    CHECK(clt_entry_variance(q, 2.0, 0.5, 1.5) == Approx(3.5));
  }

  SECTION("symmetry q(x,z,w,y) = q(w,y,x,z)") {
    std::mt19937_64 rng(51);
    std::normal_distribution<double> g;
    Eigen::MatrixXd b(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) b(i, j) = g(rng);
    const auto q = make_step_kernel(0.2, Eigen::MatrixXd(b * b.transpose()));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 25; ++t) {
      const double x = u(rng), z = u(rng), w = u(rng), y = u(rng);
      CHECK(clt_asymptotic_variance(q, 1.3, x, z, w, y) ==
            Approx(clt_asymptotic_variance(q, 1.3, w, y, x, z)).margin(1e-12));
    }
  }

  SECTION("out-of-range coordinates are rejected") {
    const auto q = make_step_kernel(0.5, Eigen::MatrixXd::Identity(4, 4));
    CHECK_THROWS_AS(clt_entry_variance(q, 1.0, -0.1, 0.5), DataError);
    CHECK_THROWS_AS(clt_entry_variance(q, 1.0, 0.1, 2.5), DataError);
    CHECK_THROWS_AS(clt_entry_variance(q, 0.0, 0.1, 0.5), ConfigError);
  }
}
