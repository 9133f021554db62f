#include <doctest.h>

#include <rspde/controlled.hpp>

#include "oracles.hpp"

using namespace rspde;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::shared_ptr<const TimeGrid> dyadic(double T, int depth) {
  return std::make_shared<TimeGrid>(TimeGrid::dyadic(T, depth));
}

// (X, 1): Y = X as a scalar spatially-constant field, Y' = 1.
ControlledEnsemble pair_x_one(std::shared_ptr<const LiftEnsemble> lift,
                              const HolderExponents& exps) {
  FieldShape sh{1, 0, 1, true};
  auto grid = lift->grid;
  const int M = lift->broadcast ? 1 : lift->num_samples;
  auto y = std::make_shared<FieldEnsemble>(sh, grid, M);
  auto yp = std::make_shared<FieldEnsemble>(sh, grid, M);
  y->adapted = yp->adapted = true;
  for (int s = 0; s < M; ++s)
    for (int n = 0; n < grid->num_nodes(); ++n) {
      y->at(s, n)[0] = lift->lift(s).x_node(n)[0];
      yp->at(s, n)[0] = 1.0;
    }
  return make_controlled(y, yp, lift, 0.0, exps);
}

double eval_scalar(const MartingaleTaggedIncrement& r, int smp, int s, int t) {
  Complex out;
  const int idx[1] = {t};
  r.total->eval_row(smp, s, {idx, 1}, &out);
  return out.real();
}

}  // namespace

TEST_CASE("remainder of canonical pairs") {
  HolderExponents exps{0.5, 0.45, 0.3};
  auto grid = dyadic(1.0, 6);
  auto lift = LiftEnsemble::broadcast_of(lift_smooth(
      [](double t) {
        Eigen::VectorXd v(1);
        v << std::sin(kTwoPi * t) + 0.4 * t;
        return v;
      },
      grid, 1, 16));

  SUBCASE("(X, 1) has vanishing remainder") {
    auto c = pair_x_one(lift, exps);
    for (auto [i, j] : {std::pair{0, 5}, {3, 33}, {10, 64}})
      CHECK(std::abs(eval_scalar(c.remainder_tag, 0, i, j)) <= 1e-14);
  }
  SUBCASE("constant pairs have vanishing remainder") {
    FieldShape sh{1, 0, 1, true};
    auto y = std::make_shared<FieldEnsemble>(sh, grid, 1);
    auto yp = std::make_shared<FieldEnsemble>(sh, grid, 1);
    for (int n = 0; n < grid->num_nodes(); ++n) y->at(0, n)[0] = 2.7;
    auto c = make_controlled(y, yp, lift, 0.0, exps);
    CHECK(std::abs(eval_scalar(c.remainder_tag, 0, 0, 40)) == 0.0);
  }
  SUBCASE("second-level pair (XX(0,.), dX(0,.)) reproduces XX(s,t)") {
    auto fine = dyadic(1.0, 9);
    auto flift = LiftEnsemble::broadcast_of(lift_smooth(
        [](double t) {
          Eigen::VectorXd v(1);
          v << std::sin(kTwoPi * t) + 0.4 * t;
          return v;
        },
        fine, 1, 16));
    FieldShape sh{1, 0, 1, true};
    auto y = std::make_shared<FieldEnsemble>(sh, fine, 1);
    auto yp = std::make_shared<FieldEnsemble>(sh, fine, 1);
    const auto& L = flift->lift(0);
    for (int n = 0; n < fine->num_nodes(); ++n) {
      y->at(0, n)[0] = L.xx_pair(0, n)(0, 0);
      yp->at(0, n)[0] = L.x_node(n)[0];
    }
    auto c = make_controlled(y, yp, flift, 0.0, exps);
    for (auto [i, j] : {std::pair{0, 8}, {5, 9}, {16, 480}, {7, 150}}) {
      const double got = eval_scalar(c.remainder_tag, 0, i, j);
      CHECK(got == doctest::Approx(L.xx_pair(i, j)(0, 0)).epsilon(1e-10));
    }
    // locally second-order in the gap: slope fit over short dyadic spans
    std::vector<double> lx, ly;
    for (int lvl = 4; lvl <= 8; ++lvl) {
      const int span = fine->num_steps() >> lvl;
      double worst = 0.0;
      for (int i = 0; i + span < fine->num_nodes(); i += span)
        worst = std::max(worst,
                         std::abs(eval_scalar(c.remainder_tag, 0, i, i + span)));
      lx.push_back(std::log2(span * fine->dt(0)));
      ly.push_back(std::log2(worst));
    }
    CHECK(oracle::lsq_slope(lx, ly) == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("mild remainder") {
  HolderExponents exps{0.5, 0.45, 0.3};
  auto grid = dyadic(1.0, 5);
  FieldShape sh{1, 2, 1, true};
  auto lift = LiftEnsemble::broadcast_of(lift_smooth(
      [](double t) {
        Eigen::VectorXd v(1);
        v << std::sin(kTwoPi * t);
        return v;
      },
      grid, 1, 8));
  int k1[] = {1};
  auto u = single_mode_field(sh, 0, {k1, 1}, 1.0, true);
  auto y = std::make_shared<FieldEnsemble>(sh, grid, 1);
  auto yp = std::make_shared<FieldEnsemble>(FieldShape{1, 2, 1, true}, grid, 1);
  for (int n = 0; n < grid->num_nodes(); ++n) y->set_field(0, n, u);
  auto c = make_controlled(y, yp, lift, 0.0, exps);

  SUBCASE("identity propagator reduces to the plain remainder") {
    auto id = std::make_shared<Propagator>(Propagator::identity(1, 2));
    auto cache = std::make_shared<PropagatorGridCache>(id, *grid);
    auto mr = mild_remainder(c, cache);
    std::vector<Complex> a(sh.size()), b(sh.size());
    const int idx[1] = {20};
    mr.mild.total->eval_row(0, 3, {idx, 1}, a.data());
    c.remainder_tag.total->eval_row(0, 3, {idx, 1}, b.data());
    for (int i = 0; i < sh.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-14);
    mr.plain_minus_mild->eval_row(0, 3, {idx, 1}, a.data());
    for (int i = 0; i < sh.size(); ++i) CHECK(std::abs(a[i]) <= 1e-14);
  }
  SUBCASE("constant field under heat transport") {
    auto heat = std::make_shared<Propagator>(GeneratorFamily::heat(), 1, 2);
    auto cache = std::make_shared<PropagatorGridCache>(heat, *grid);
    auto mr = mild_remainder(c, cache);
    const double w = 39.478417604357434475;
    double worst_ratio = 0.0;
    const double bb = exps.beta + exps.beta_prime;
    for (auto [i, j] : {std::pair{0, 8}, {3, 9}, {10, 30}, {0, 32}}) {
      std::vector<Complex> a(sh.size());
      const int idx[1] = {j};
      mr.mild.total->eval_row(0, i, {idx, 1}, a.data());
      // oracle: Rhat = u - S u per mode (Y' = 0 makes the second term drop)
      const double tau = grid->t(j) - grid->t(i);
      const double factor = 1.0 - std::exp(-w * tau);
      SpectralField expect = u;
      expect *= factor;
      double diff = 0.0;
      for (int q = 0; q < sh.size(); ++q)
        diff = std::max(diff, std::abs(a[q] - (-1.0) * 0.0 - expect.coef()[q]));
      CHECK(diff <= 1e-12);
      SpectralField rr(sh);
      for (int q = 0; q < sh.size(); ++q) rr.coef()[q] = a[q];
      worst_ratio = std::max(
          worst_ratio, sobolev_norm(rr, -bb) / std::pow(tau, bb));
    }
    // order beta+beta' at index gamma-beta-beta': bounded by the per-mode
    // scalar supremum sup_x (1-e^{-x}) x^{-bb} with the homogeneous symbol
    double scalar_sup = 0.0;
    for (double x = 1e-4; x < 60.0; x *= 1.01)
      scalar_sup = std::max(scalar_sup,
                            (1.0 - std::exp(-x)) * std::pow(x, -bb));
    const double wb = 1.0 + w;  // weight of the |k| = 1 modes
    CHECK(worst_ratio <=
          std::pow(w, bb) * std::pow(wb, -bb) * scalar_sup *
                  sobolev_norm(u, 0.0) * (1.0 + 1e-6) );
  }
  SUBCASE("zero ensembles stay zero") {
    auto y0 = std::make_shared<FieldEnsemble>(sh, grid, 1);
    auto yp0 = std::make_shared<FieldEnsemble>(FieldShape{1, 2, 1, true}, grid, 1);
    auto cz = make_controlled(y0, yp0, lift, 0.0, exps);
    auto heat = std::make_shared<Propagator>(GeneratorFamily::heat(), 1, 2);
    auto cache = std::make_shared<PropagatorGridCache>(heat, *grid);
    auto mr = mild_remainder(cz, cache);
    std::vector<Complex> a(sh.size());
    const int idx[1] = {17};
    mr.mild.total->eval_row(0, 2, {idx, 1}, a.data());
    for (int i = 0; i < sh.size(); ++i) CHECK(std::abs(a[i]) == 0.0);
  }
}

TEST_CASE("controlled norms") {
  HolderExponents exps{0.45, 0.4, 0.3};
  auto grid = dyadic(1.0, 6);

  SUBCASE("zero pair") {
    auto lift = zero_lift_ensemble(grid, 1);
    FieldShape sh{1, 1, 1, true};
    auto y = std::make_shared<FieldEnsemble>(sh, grid, 2);
    auto yp = std::make_shared<FieldEnsemble>(sh, grid, 2);
    auto c = make_controlled(y, yp, lift, 0.0, exps);
    auto rep = scrp_norm(c, 2, 0.0);
    CHECK(rep.total == 0.0);
  }
  SUBCASE("deterministic constant field keeps only sup terms") {
    auto lift = zero_lift_ensemble(grid, 1);
    FieldShape sh{1, 1, 1, true};
    int k1[] = {1};
    auto u = single_mode_field(sh, 0, {k1, 1}, 0.7, true);
    auto y = std::make_shared<FieldEnsemble>(sh, grid, 2);
    auto yp = std::make_shared<FieldEnsemble>(sh, grid, 2);
    for (int s = 0; s < 2; ++s)
      for (int n = 0; n < grid->num_nodes(); ++n) y->set_field(s, n, u);
    auto c = make_controlled(y, yp, lift, 0.0, exps);
    auto rep = scrp_norm(c, 2, 0.0);
    CHECK(rep.y_norm == doctest::Approx(sobolev_norm(u, 0.0)).epsilon(1e-13));
    CHECK(rep.y_prime_norm == 0.0);
    CHECK(rep.cond_remainder_norm == 0.0);
    CHECK(rep.total == doctest::Approx(rep.y_norm).epsilon(1e-13));
  }
  SUBCASE("(X, 1) on a Brownian Ito lift matches the direct formulas") {
    const int M = 20000;
    auto lift = lift_brownian_ensemble(31, grid, 1, BrownianMode::Ito, 4, M);
    auto c = pair_x_one(lift, exps);
    auto rep = scrp_norm(c, 2, 0.0);
    CHECK(rep.cond_remainder_norm == 0.0);
    // ||X||_{0,2,0} = sqrt(T), ||dX||_{b,2,-b} = sup tau^{1/2-b} = T^{1/2-b}
    const double tol = 4.0 / std::sqrt(double(M)) + 0.02;
    CHECK(std::abs(rep.y_norm - 2.0) <= 2.0 * tol);  // sqrt(T) + T^{1/2-b} = 2
    CHECK(std::abs(rep.y_prime_norm - 1.0) <= 1e-12);
  }
}

TEST_CASE("composition with operator families") {
  HolderExponents exps{0.5, 0.45, 0.3};
  auto grid = dyadic(1.0, 5);
  const int K = 4;
  FieldShape sh{1, K, 1, true};
  auto lift = LiftEnsemble::broadcast_of(lift_smooth(
      [](double t) {
        Eigen::VectorXd v(1);
        v << std::sin(kTwoPi * t);
        return v;
      },
      grid, 1, 8));

  // a generic controlled pair (Y, Y') = (v0 + X w, w)
  int kw[] = {1};
  const SpectralField w = single_mode_field(sh, 0, {kw, 1}, 0.5, true);
  int kv[] = {2};
  const SpectralField v0 = single_mode_field(sh, 0, {kv, 1}, 0.3, true);
  auto make_pair = [&](double scale) {
    auto y = std::make_shared<FieldEnsemble>(sh, grid, 1);
    auto yp = std::make_shared<FieldEnsemble>(sh, grid, 1);
    for (int n = 0; n < grid->num_nodes(); ++n) {
      SpectralField f = v0;
      SpectralField xw = w;
      xw *= lift->lift(0).x_node(n)[0];
      f += xw;
      f *= scale;
      y->set_field(0, n, f);
      SpectralField wp = w;
      wp *= scale;
      yp->set_field(0, n, wp);
    }
    return make_controlled(y, yp, lift, 0.0, exps);
  };
  auto c = make_pair(1.0);

  SUBCASE("identity symbol acts as the identity") {
    SpectralField one(sh);
    int k0[] = {0};
    one.at(0, flat_mode_index(sh, {k0, 1})) = 1.0;
    auto g = std::make_shared<ControlledOperatorFamily>(
        ControlledOperatorFamily::constant_symbol(one, 1, 1));
    auto out = compose(g, c);
    CHECK((out.y->raw().size() == c.y->raw().size()));
    double diff = 0.0;
    for (std::size_t i = 0; i < c.y->raw().size(); ++i)
      diff = std::max(diff, std::abs(out.y->raw()[i] - c.y->raw()[i]));
    CHECK(diff <= 1e-12);
  }
  SUBCASE("constant symbol factors out of the remainder") {
    SpectralField phi(sh);
    int k0[] = {0}, k1[] = {1};
    phi.at(0, flat_mode_index(sh, {k0, 1})) = 1.0;
    phi.at(0, flat_mode_index(sh, {k1, 1})) = 0.25;
    phi.at(0, flat_mode_index(sh, {kw, 1})) += 0.0;
    phi.at(0, flat_mode_index(sh, std::array<int, 1>{-1})) = 0.25;
    auto g = std::make_shared<ControlledOperatorFamily>(
        ControlledOperatorFamily::constant_symbol(phi, 1, 1));
    auto out = compose(g, c);
    auto col = Collocation::shared(1, K);
    for (auto [i, j] : {std::pair{0, 7}, {4, 20}, {16, 31}}) {
      std::vector<Complex> rin(sh.size()), rout(sh.size()), want(sh.size());
      const int idx[1] = {j};
      c.remainder_tag.total->eval_row(0, i, {idx, 1}, rin.data());
      out.remainder_tag.total->eval_row(0, i, {idx, 1}, rout.data());
      multiply_fields(*col, phi.channel_span(0), rin, want);
      for (int q = 0; q < sh.size(); ++q)
        CHECK(std::abs(rout[q] - want[q]) <= 1e-12);
    }
  }
  SUBCASE("bilinearity is exact") {
    SpectralField phi(sh);
    int k0[] = {0};
    phi.at(0, flat_mode_index(sh, {k0, 1})) = 0.8;
    auto g = std::make_shared<ControlledOperatorFamily>(
        ControlledOperatorFamily::constant_symbol(phi, 1, 1));
    auto c2 = make_pair(-0.4);
    auto comb = controlled_linear_comb(2.0, c, 1.0, c2);
    auto lhs = compose(g, comb);
    auto r1 = compose(g, c);
    auto r2 = compose(g, c2);
    auto rhs = controlled_linear_comb(2.0, r1, 1.0, r2);
    double diff = 0.0;
    for (std::size_t i = 0; i < lhs.y->raw().size(); ++i)
      diff = std::max(diff, std::abs(lhs.y->raw()[i] - rhs.y->raw()[i]));
    for (std::size_t i = 0; i < lhs.y_prime->raw().size(); ++i)
      diff = std::max(diff,
                      std::abs(lhs.y_prime->raw()[i] - rhs.y_prime->raw()[i]));
    CHECK(diff <= 1e-12);
  }
  SUBCASE("time-varying family satisfies the drift identity") {
    // G_t = psi(x) X_t with G' = psi(x): remainder of the composition should
    // match dG dY + R^G Y_s + G_s R^Y recomputed by hand
    int kp[] = {1};
    const SpectralField psi = single_mode_field(sh, 0, {kp, 1}, 0.4, true);
    FieldShape psh{1, K, 1, true};
    auto g = std::make_shared<ControlledOperatorFamily>(
        1, K, 1, 1, 1,
        [psi, lift](int node, int) {
          SpectralField s = psi;
          s *= lift->lift(0).x_node(node)[0];
          return s;
        },
        [psi](int, int) { return psi; }, false, true);
    auto out = compose(g, c);
    auto col = Collocation::shared(1, K);
    for (auto [i, j] : {std::pair{0, 9}, {6, 22}}) {
      const int idx[1] = {j};
      std::vector<Complex> rout(sh.size()), rin(sh.size()), buf(sh.size()),
          want(sh.size());
      out.remainder_tag.total->eval_row(0, i, {idx, 1}, rout.data());
      c.remainder_tag.total->eval_row(0, i, {idx, 1}, rin.data());
      // dG dY
      SpectralField dg = g->symbol(j, 0) - g->symbol(i, 0);
      SpectralField dy = c.y->field(0, j) - c.y->field(0, i);
      multiply_fields(*col, dg.channel_span(0),
                      {dy.coef().data(), std::size_t(dy.coef().size())},
                      want);
      // + R^G Y_s
      SpectralField rg = g->remainder_symbol(i, j, 0, lift->lift(0));
      multiply_fields(*col, rg.channel_span(0), c.y->span(0, i), buf);
      for (int q = 0; q < sh.size(); ++q) want[q] += buf[q];
      // + G_s R^Y
      multiply_fields(*col, g->symbol(i, 0).channel_span(0), rin, buf);
      for (int q = 0; q < sh.size(); ++q) want[q] += buf[q];
      for (int q = 0; q < sh.size(); ++q)
        CHECK(std::abs(rout[q] - want[q]) <= 1e-11);
    }
    // composition norm bound stays stable under grid refinement
    std::vector<double> consts;
    for (int depth : {4, 5, 6}) {
      auto g2 = dyadic(1.0, depth);
      auto lift2 = LiftEnsemble::broadcast_of(lift_smooth(
          [](double t) {
            Eigen::VectorXd v(1);
            v << std::sin(kTwoPi * t);
            return v;
          },
          g2, 1, 8));
      auto y = std::make_shared<FieldEnsemble>(sh, g2, 1);
      auto yp = std::make_shared<FieldEnsemble>(sh, g2, 1);
      for (int n = 0; n < g2->num_nodes(); ++n) {
        SpectralField f = v0;
        SpectralField xw = w;
        xw *= lift2->lift(0).x_node(n)[0];
        f += xw;
        y->set_field(0, n, f);
        yp->set_field(0, n, w);
      }
      auto cc = make_controlled(y, yp, lift2, 0.0, exps);
      auto gg = std::make_shared<ControlledOperatorFamily>(
          1, K, 1, 1, 1,
          [psi, lift2](int node, int) {
            SpectralField s = psi;
            s *= lift2->lift(0).x_node(node)[0];
            return s;
          },
          [psi](int, int) { return psi; }, false, true);
      const double num = scrp_norm(compose(gg, cc), 2, 0.0).total;
      const double den = scrp_norm(cc, 2, 0.0).total;
      consts.push_back(num / den);
    }
    CHECK(consts[2] <= 1.5 * consts[1] + 1e-12);
    CHECK(consts[1] <= 1.5 * consts[0] + 1e-12);
  }
  SUBCASE("channel mismatch rejected") {
    FieldShape sh2{1, K, 2, true};
    SpectralField sym(sh2);
    auto g = std::make_shared<ControlledOperatorFamily>(
        ControlledOperatorFamily::constant_symbol(sym, 2, 1));
    CHECK_THROWS_AS(compose(g, c), std::domain_error);
  }
}

TEST_CASE("controlled distance") {
  HolderExponents exps{0.45, 0.4, 0.3};
  auto grid = dyadic(1.0, 6);
  auto lift = lift_brownian_ensemble(13, grid, 1, BrownianMode::Ito, 4, 16);
  auto c1 = pair_x_one(lift, exps);

  SUBCASE("identical pairs have zero distance") {
    CHECK(scrp_distance(c1, c1, 2, 0.0) == 0.0);
  }
  SUBCASE("distance to the zero pair is the norm") {
    FieldShape sh{1, 0, 1, true};
    auto y = std::make_shared<FieldEnsemble>(sh, grid, 16);
    auto yp = std::make_shared<FieldEnsemble>(sh, grid, 16);
    auto zero = make_controlled(y, yp, lift, 0.0, exps);
    CHECK(scrp_distance(c1, zero, 2, 0.0) ==
          doctest::Approx(scrp_norm(c1, 2, 0.0).total).epsilon(1e-12));
  }
  SUBCASE("perturbations scale linearly") {
    FieldShape sh{1, 0, 1, true};
    auto perturbed = [&](double eps) {
      auto y = std::make_shared<FieldEnsemble>(*c1.y);
      for (int s = 0; s < 16; ++s)
        for (int n = 0; n < grid->num_nodes(); ++n)
          y->at(s, n)[0] += eps * (1.0 + grid->t(n));
      return make_controlled(y, c1.y_prime, lift, 0.0, exps,
                             c1.remainder_tag.martingale);
    };
    const double d1 = scrp_distance(c1, perturbed(0.2), 2, 0.0);
    const double d2 = scrp_distance(c1, perturbed(0.1), 2, 0.0);
    CHECK(d2 / d1 == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("remainder tag consistency after composition") {
  HolderExponents exps{0.45, 0.4, 0.3};
  auto grid = dyadic(1.0, 5);
  const int K = 2;
  FieldShape sh{1, K, 1, true};
  auto lift = lift_brownian_ensemble(77, grid, 1, BrownianMode::Ito, 4, 8);

  // an Ito-convolution-flavored pair with a genuine martingale part
  auto y = std::make_shared<FieldEnsemble>(sh, grid, 8);
  auto yp = std::make_shared<FieldEnsemble>(sh, grid, 8);
  y->adapted = yp->adapted = true;
  int k1[] = {1};
  const SpectralField u = single_mode_field(sh, 0, {k1, 1}, 1.0, true);
  for (int s = 0; s < 8; ++s)
    for (int n = 0; n < grid->num_nodes(); ++n) {
      SpectralField f = u;
      f *= lift->lift(s).x_node(n)[0];
      y->set_field(s, n, f);
      yp->set_field(s, n, u);
    }
  auto mart = delta_of(y);  // dY is centered for this construction
  auto c = make_controlled(y, yp, lift, 0.0, exps, mart);

  SpectralField phi(sh);
  int k0[] = {0};
  phi.at(0, flat_mode_index(sh, {k0, 1})) = 1.0;
  phi.at(0, flat_mode_index(sh, {k1, 1})) = 0.3;
  phi.at(0, flat_mode_index(sh, std::array<int, 1>{-1})) = 0.3;
  auto g = std::make_shared<ControlledOperatorFamily>(
      ControlledOperatorFamily::constant_symbol(phi, 1, 1));
  auto out = compose(g, c);
  REQUIRE(out.remainder_tag.has_martingale_part());

  // total = martingale + drift exactly, and the martingale part is G_s
  // applied to the input's martingale part
  auto col = Collocation::shared(1, K);
  for (auto [i, j] : {std::pair{0, 6}, {8, 20}, {3, 31}}) {
    const int idx[1] = {j};
    std::vector<Complex> tot(sh.size()), mt(sh.size()), dr(sh.size()),
        min(sh.size()), want(sh.size());
    out.remainder_tag.total->eval_row(0, i, {idx, 1}, tot.data());
    out.remainder_tag.martingale->eval_row(0, i, {idx, 1}, mt.data());
    out.remainder_tag.eval_drift_row(0, i, {idx, 1}, dr.data());
    for (int q = 0; q < sh.size(); ++q)
      CHECK(std::abs(tot[q] - mt[q] - dr[q]) <= 1e-15);
    c.remainder_tag.martingale->eval_row(0, i, {idx, 1}, min.data());
    multiply_fields(*col, phi.channel_span(0), min, want);
    for (int q = 0; q < sh.size(); ++q)
      CHECK(std::abs(mt[q] - want[q]) <= 1e-12);
  }
}
