#include <doctest.h>

#include <rspde/rough_path.hpp>
#include <rspde/stats.hpp>

#include "oracles.hpp"

using namespace rspde;

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

std::shared_ptr<const TimeGrid> dyadic(double T, int depth) {
  return std::make_shared<TimeGrid>(TimeGrid::dyadic(T, depth));
}
}  // namespace

TEST_CASE("canonical lift of smooth paths") {
  SUBCASE("linear paths are exact") {
    Eigen::VectorXd v(2);
    v << 1.5, -0.7;
    auto grid = dyadic(1.0, 5);
    auto lift = lift_smooth([&](double t) { return Eigen::VectorXd(v * t); },
                            grid, 2, 4);
    for (int i = 0; i < grid->num_nodes(); ++i)
      for (int j = i; j < grid->num_nodes(); ++j) {
        const double tau = grid->t(j) - grid->t(i);
        Eigen::MatrixXd expect = 0.5 * tau * tau * v * v.transpose();
        CHECK((lift.xx_pair(i, j) - expect).norm() <= 1e-10);
      }
  }
  SUBCASE("constant paths vanish") {
    auto grid = dyadic(1.0, 4);
    auto lift = lift_smooth(
        [](double) {
          Eigen::VectorXd v(1);
          v << 3.0;
          return v;
        },
        grid, 1, 2);
    CHECK(lift.x_at(grid->num_steps()).norm() == 0.0);  // basepoint shifted
    CHECK(lift.xx_pair(0, grid->num_steps()).norm() == 0.0);
  }
  SUBCASE("circle block matches the quadrature oracle") {
    auto path = [](double t) {
      Eigen::VectorXd v(2);
      v << std::cos(kTwoPi * t) - 1.0, std::sin(kTwoPi * t);
      return v;
    };
    auto deriv = [](double t) {
      Eigen::VectorXd v(2);
      v << -kTwoPi * std::sin(kTwoPi * t), kTwoPi * std::cos(kTwoPi * t);
      return v;
    };
    auto grid = dyadic(1.0, 10);
    auto lift = lift_smooth(path, grid, 2, 64);
    Eigen::MatrixXd got = lift.xx_pair(0, grid->num_steps());
    Eigen::MatrixXd ref = oracle::iterated_integral(path, deriv, 0.0, 1.0, 2);
    CHECK((got - ref).norm() <= 1e-5);
    // signed-area sanity: the antisymmetric part carries the enclosed area pi
    const double area = 0.5 * (got(0, 1) - got(1, 0));
    CHECK(area == doctest::Approx(3.14159265358979).epsilon(1e-4));
  }
}

TEST_CASE("Brownian enhancement statistics") {
  auto grid = dyadic(1.0, 6);
  const int M = 10000;

  SUBCASE("ito blocks are centered, strat blocks carry t/2") {
    auto ito = lift_brownian_ensemble(101, grid, 1, BrownianMode::Ito, 16, M);
    auto strat =
        lift_brownian_ensemble(101, grid, 1, BrownianMode::Strat, 16, M);
    std::vector<double> di, ds;
    const int last = grid->num_steps();
    for (int s = 0; s < M; ++s) {
      di.push_back(ito->lifts[s].xx_pair(0, last)(0, 0));
      ds.push_back(strat->lifts[s].xx_pair(0, last)(0, 0));
    }
    CHECK(std::abs(oracle::mean(di)) <= 3.0 * oracle::std_error(di));
    CHECK(std::abs(oracle::mean(ds) - 0.5) <= 3.0 * oracle::std_error(ds));
    // E (XX_{0,1})^2 = 1/2 for the Ito enhancement (isometry oracle)
    std::vector<double> sq;
    for (double v : di) sq.push_back(v * v);
    CHECK(std::abs(oracle::mean(sq) - 0.5) <= 3.0 * oracle::std_error(sq));
  }
  SUBCASE("ito and strat differ by exactly half the step on the diagonal") {
    auto ito = lift_brownian_ensemble(55, grid, 2, BrownianMode::Ito, 8, 3);
    auto strat = lift_brownian_ensemble(55, grid, 2, BrownianMode::Strat, 8, 3);
    for (int s = 0; s < 3; ++s)
      for (int i = 0; i < grid->num_steps(); ++i) {
        Eigen::Map<const RowMat> a(ito->lifts[s].xx_step(i), 2, 2);
        Eigen::Map<const RowMat> b(strat->lifts[s].xx_step(i), 2, 2);
        Eigen::MatrixXd d = b - a;
        CHECK(std::abs(d(0, 0) - 0.5 * grid->dt(i)) <= 1e-15);
        CHECK(std::abs(d(1, 1) - 0.5 * grid->dt(i)) <= 1e-15);
        CHECK(std::abs(d(0, 1)) <= 1e-15);
      }
  }
}

TEST_CASE("fractional Brownian lift") {
  auto grid = dyadic(1.0, 6);
  SUBCASE("hurst out of range rejected") {
    CHECK_THROWS_AS(lift_fbm(1, grid, 1, 0.3, 2), std::domain_error);
    CHECK_THROWS_AS(lift_fbm(1, grid, 1, 0.6, 2), std::domain_error);
  }
  SUBCASE("H = 1/2 marginal matches the standard normal") {
    const int M = 10000;
    auto ens = lift_fbm_ensemble(7, grid, 1, 0.5, 2, M);
    std::vector<double> xT;
    for (const auto& L : ens->lifts) xT.push_back(L.x_node(grid->num_steps())[0]);
    CHECK(ks_p_normal(std::move(xT)) > 0.01);
  }
  SUBCASE("geometric symmetric-part identity is exact") {
    auto L = lift_fbm(3, grid, 2, 0.45, 3);
    for (int i = 0; i < grid->num_nodes(); i += 7)
      for (int j = i + 1; j < grid->num_nodes(); j += 9) {
        Eigen::MatrixXd xx = L.xx_pair(i, j);
        Eigen::VectorXd dx = L.delta_x(i, j);
        Eigen::MatrixXd sym = 0.5 * (xx + xx.transpose());
        CHECK((sym - 0.5 * dx * dx.transpose()).norm() <= 1e-12);
      }
  }
  SUBCASE("increment variance follows |t-s|^{2H}") {
    const int M = 10000;
    const double H = 0.4;
    auto ens = lift_fbm_ensemble(11, grid, 1, H, 2, M);
    for (auto [i, j] : {std::pair{0, 16}, {8, 40}, {0, 64}}) {
      std::vector<double> sq;
      for (const auto& L : ens->lifts) {
        const double d = L.x_node(j)[0] - L.x_node(i)[0];
        sq.push_back(d * d);
      }
      const double tau = grid->t(j) - grid->t(i);
      CHECK(std::abs(oracle::mean(sq) - std::pow(tau, 2 * H)) <=
            3.0 * oracle::std_error(sq));
    }
  }
}

TEST_CASE("Chen relation validation") {
  auto grid = dyadic(1.0, 4);
  SUBCASE("constructed lifts pass after full expansion") {
    auto L = lift_brownian(17, grid, 2, BrownianMode::Ito, 8);
    auto tab = expand_all_pairs(L);
    Eigen::MatrixXd x(grid->num_nodes(), 2);
    for (int i = 0; i < grid->num_nodes(); ++i)
      for (int c = 0; c < 2; ++c) x(i, c) = L.x_node(i)[c];
    CHECK(chen_defect(x, tab) <= 1e-12);
  }
  SUBCASE("zero blocks with nonzero increments are flagged") {
    auto L = lift_brownian(17, grid, 1, BrownianMode::Ito, 8);
    PairBlockTable tab;
    tab.num_nodes = grid->num_nodes();
    tab.dim_e = 1;
    tab.data.assign(std::size_t(tab.num_nodes) * tab.num_nodes, 0.0);
    Eigen::MatrixXd x(grid->num_nodes(), 1);
    double expect = 0.0;
    for (int i = 0; i < grid->num_nodes(); ++i) x(i, 0) = L.x_node(i)[0];
    for (int s = 0; s < tab.num_nodes; ++s)
      for (int r = s; r < tab.num_nodes; ++r)
        for (int t = r; t < tab.num_nodes; ++t)
          expect = std::max(expect, std::abs((x(r, 0) - x(s, 0)) *
                                             (x(t, 0) - x(r, 0))));
    CHECK(chen_defect(x, tab) == doctest::Approx(expect));
    CHECK(chen_defect(x, tab) > 0.0);
  }
  SUBCASE("linear path with its exact blocks") {
    Eigen::VectorXd v(1);
    v << 2.0;
    auto L = lift_smooth([&](double t) { return Eigen::VectorXd(v * t); },
                         grid, 1, 1);
    auto tab = expand_all_pairs(L);
    Eigen::MatrixXd x(grid->num_nodes(), 1);
    for (int i = 0; i < grid->num_nodes(); ++i) x(i, 0) = L.x_node(i)[0];
    CHECK(chen_defect(x, tab) <= 1e-12);
  }
  SUBCASE("shape mismatch rejected") {
    auto L = lift_brownian(17, grid, 1, BrownianMode::Ito, 2);
    auto tab = expand_all_pairs(L);
    Eigen::MatrixXd x(3, 1);
    x.setZero();
    CHECK_THROWS_AS(chen_defect(x, tab), std::domain_error);
  }
}

TEST_CASE("Hoelder norms and the rough-path metric") {
  auto grid = dyadic(1.0, 6);
  SUBCASE("unit-speed line") {
    auto L = lift_smooth(
        [](double t) {
          Eigen::VectorXd v(1);
          v << t;
          return v;
        },
        grid, 1, 1);
    auto [nx, nxx] = holder_norms(L, 0.45);
    CHECK(nx == doctest::Approx(1.0).epsilon(1e-12));  // attained at (0, 1)
  }
  SUBCASE("constant path gives zeros") {
    auto L = lift_smooth(
        [](double) {
          Eigen::VectorXd v(1);
          v << 4.0;
          return v;
        },
        grid, 1, 1);
    auto [nx, nxx] = holder_norms(L, 0.45);
    CHECK(nx == 0.0);
    CHECK(nxx == 0.0);
  }
  SUBCASE("closed-form maximum for the speed-2 line at alpha = 1/2") {
    auto L = lift_smooth(
        [](double t) {
          Eigen::VectorXd v(1);
          v << 2.0 * t;
          return v;
        },
        grid, 1, 1);
    auto [nx, nxx] = holder_norms(L, 0.5);
    CHECK(nxx == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(nx == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("distance identities") {
    auto L1 = lift_brownian(5, grid, 1, BrownianMode::Ito, 4);
    CHECK(rough_distance(L1, L1, 0.45) == 0.0);
    RoughPathLift zero(grid, 1, 0);
    zero.finalize();
    auto [nx, nxx] = holder_norms(L1, 0.45);
    CHECK(rough_distance(L1, zero, 0.45) ==
          doctest::Approx(nx + nxx).epsilon(1e-12));
  }
  SUBCASE("distance is linear along linear-path perturbations") {
    auto line = [&](double v) {
      return lift_smooth(
          [v](double t) {
            Eigen::VectorXd w(1);
            w << v * t;
            return w;
          },
          grid, 1, 1);
    };
    auto base = line(1.0);
    const double d1 = rough_distance(base, line(1.0 + 0.2), 0.5);
    const double d2 = rough_distance(base, line(1.0 + 0.1), 0.5);
    // first level is linear in eps; the second level contributes
    // (1+eps)^2 - 1 = 2 eps + eps^2, so halving is slightly above 1/2
    CHECK(d2 / d1 == doctest::Approx(0.5).epsilon(0.05));
  }
  SUBCASE("triangle inequality on random lift triples") {
    for (int trial = 0; trial < 100; ++trial) {
      auto a = lift_brownian(1000 + trial, grid, 1, BrownianMode::Ito, 2);
      auto b = lift_brownian(2000 + trial, grid, 1, BrownianMode::Strat, 2);
      auto c = lift_fbm(3000 + trial, grid, 1, 0.45, 1);
      const double ab = rough_distance(a, b, 0.45);
      const double bc = rough_distance(b, c, 0.45);
      const double ac = rough_distance(a, c, 0.45);
      CHECK(ac <= ab + bc + 1e-12);
    }
  }
  SUBCASE("basepoint invariance and canonical scaling") {
    auto path = [](double t) {
      Eigen::VectorXd v(1);
      v << std::sin(kTwoPi * t) + 0.3 * t;
      return v;
    };
    auto L1 = lift_smooth(path, grid, 1, 8);
    auto L2 = lift_smooth(
        [&](double t) { return Eigen::VectorXd(path(t).array() + 5.0); }, grid,
        1, 8);
    auto [n1x, n1xx] = holder_norms(L1, 0.5);
    auto [n2x, n2xx] = holder_norms(L2, 0.5);
    CHECK(n1x == doctest::Approx(n2x).epsilon(1e-13));
    CHECK(n1xx == doctest::Approx(n2xx).epsilon(1e-13));
    const double c = 1.7;
    auto Lc = lift_smooth(
        [&](double t) { return Eigen::VectorXd(c * path(t)); }, grid, 1, 8);
    auto [ncx, ncxx] = holder_norms(Lc, 0.5);
    CHECK(ncx == doctest::Approx(c * n1x).epsilon(1e-12));
    CHECK(ncxx == doctest::Approx(c * c * n1xx).epsilon(1e-12));
  }
  SUBCASE("grid mismatch rejected") {
    auto L1 = lift_brownian(5, grid, 1, BrownianMode::Ito, 2);
    auto L2 = lift_brownian(5, dyadic(1.0, 5), 1, BrownianMode::Ito, 2);
    CHECK_THROWS_AS(rough_distance(L1, L2, 0.45), std::domain_error);
  }
}

TEST_CASE("seed splitting reproduces ensembles bitwise") {
  auto grid = dyadic(1.0, 5);
  auto a = lift_brownian_ensemble(99, grid, 2, BrownianMode::Ito, 4, 8);
  auto b = lift_brownian_ensemble(99, grid, 2, BrownianMode::Ito, 4, 8);
  for (int s = 0; s < 8; ++s) {
    for (int i = 0; i < grid->num_nodes(); ++i)
      for (int c = 0; c < 2; ++c)
        CHECK(a->lifts[s].x_node(i)[c] == b->lifts[s].x_node(i)[c]);
  }
  // distinct samples decouple
  CHECK(a->lifts[0].x_node(8)[0] != a->lifts[1].x_node(8)[0]);
}
