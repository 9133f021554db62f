#include "rspde/solver.hpp"

#include <cmath>
#include <sstream>

#include "rspde/parallel.hpp"

namespace rspde {

namespace {

constexpr double kInitTol = 1e-9;

double max_abs(std::span<const Complex> v) {
  double m = 0.0;
  for (const auto& c : v) m = std::max(m, std::abs(c));
  return m;
}

// G(t) u + g(t), the enforced derivative of the solution pair.
FieldEnsemble derivative_of(const RspdeProblem& prob, const FieldEnsemble& u) {
  const int e = prob.lift->dim_e;
  FieldShape sh = u.shape();
  sh.channels *= e;
  FieldEnsemble out(sh, u.grid_ptr(), u.num_samples());
  out.adapted = u.adapted;
  if (prob.gg) {
    parallel_for(u.num_samples(), [&](int smp) {
      for (int node = 0; node < u.num_nodes(); ++node)
        prob.gg->apply(node, smp, u.span(smp, node), out.span(smp, node));
    });
  }
  if (prob.forcing) {
    const auto& g = *prob.forcing->y;
    for (int smp = 0; smp < u.num_samples(); ++smp) {
      const int gs = g.num_samples() == 1 ? 0 : smp;
      for (int node = 0; node < u.num_nodes(); ++node) {
        Complex* dst = out.at(smp, node);
        const Complex* src = g.at(gs, node);
        for (int i = 0; i < sh.size(); ++i) dst[i] += src[i];
      }
    }
  }
  return out;
}

FieldEnsemble evaluate_coeff(const RspdeProblem::CoeffFn& fn,
                             const FieldEnsemble& u, const FieldShape& out_shape,
                             const TimeGrid& grid) {
  FieldEnsemble out(out_shape, u.grid_ptr(), u.num_samples());
  out.adapted = true;
  parallel_for(u.num_samples(), [&](int smp) {
    for (int node = 0; node < u.num_nodes(); ++node) {
      SpectralField uf = u.field(smp, node);
      SpectralField v = fn(grid.t(node), smp, uf);
      if (!v.shape().same_space(out_shape))
        throw std::domain_error("coefficient returned wrong field shape");
      std::copy(v.coef().data(), v.coef().data() + v.coef().size(),
                out.at(smp, node));
    }
  });
  return out;
}

}  // namespace

void RspdeProblem::validate() const {
  exps.validate(/*solver_use=*/true);
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::domain_error("RspdeProblem: lambda must lie in [0, 1)");
  if (!(mu >= 0.0 && mu < 0.5))
    throw std::domain_error("RspdeProblem: mu must lie in [0, 1/2)");
  if (!(nu >= 0.0 && nu <= exps.beta_prime))
    throw std::domain_error("RspdeProblem: nu must lie in [0, beta']");
  if (m != kInfinityM && m < 2)
    throw std::domain_error("RspdeProblem: m >= 2");
  if (!lift || !propagator || !prop_cache)
    throw std::domain_error("RspdeProblem: missing lift or propagator");
  if (driver && driver->grid->num_nodes() != grid().num_nodes())
    throw std::domain_error("RspdeProblem: driver grid mismatch");
  if (h_coeff && !driver)
    throw std::domain_error("RspdeProblem: h needs a Brownian driver");
  if (forcing && forcing->grid().num_nodes() != grid().num_nodes())
    throw std::domain_error("RspdeProblem: forcing grid mismatch");
  if (xi.empty()) throw std::domain_error("RspdeProblem: missing initial data");
  // sampled Lipschitz probe of f and h: difference quotients on random
  // fields must produce finite ratios
  if (f_coeff || h_coeff) {
    Rng rng(derive_seed(0x11ad5, kStreamProbe, 0));
    const auto& sh = state_shape;
    for (int trial = 0; trial < 4; ++trial) {
      SpectralField u(sh), v(sh);
      for (int i = 0; i < sh.size(); ++i) {
        u.coef()[i] = Complex(rng.next_gaussian(), 0.0);
        v.coef()[i] = u.coef()[i] + 0.1 * Complex(rng.next_gaussian(), 0.0);
      }
      const double du = sobolev_norm(u - v, gamma);
      if (f_coeff) {
        const double q =
            sobolev_norm(f_coeff(0.0, 0, u) - f_coeff(0.0, 0, v), gamma - lambda);
        if (!std::isfinite(q) || (du > 0 && !std::isfinite(q / du)))
          throw std::domain_error("RspdeProblem: f Lipschitz probe failed");
      }
      if (h_coeff) {
        const double q =
            sobolev_norm(h_coeff(0.0, 0, u) - h_coeff(0.0, 0, v), gamma - mu);
        if (!std::isfinite(q) || (du > 0 && !std::isfinite(q / du)))
          throw std::domain_error("RspdeProblem: h Lipschitz probe failed");
      }
    }
  }
}

ControlledEnsemble picard_map(const RspdeProblem& prob,
                              const ControlledEnsemble& current) {
  const TimeGrid& grid = prob.grid();
  const int M = prob.num_samples;
  const FieldShape& ush = prob.state_shape;
  const int e = prob.lift->dim_e;

  // initial-data contract: u_0 = xi and u'_0 = G_0 xi + g_0
  {
    double scale = 0.0, defect = 0.0;
    for (int smp = 0; smp < M; ++smp) {
      const auto& xi = prob.xi_of(smp);
      scale = std::max(scale, max_abs({xi.coef().data(),
                                       std::size_t(xi.coef().size())}));
      const Complex* y0 = current.y->at(smp, 0);
      for (int i = 0; i < ush.size(); ++i)
        defect = std::max(defect, std::abs(y0[i] - xi.coef()[i]));
    }
    if (defect > kInitTol * (1.0 + scale))
      throw std::domain_error("picard_map: current pair does not carry xi");
  }

  // Y = G u + g at gamma - nu
  std::optional<ControlledEnsemble> ypair;
  if (prob.gg) ypair = compose(prob.gg, current, prob.gamma - prob.nu);
  if (prob.forcing) {
    ypair = ypair ? controlled_linear_comb(1.0, *ypair, 1.0, *prob.forcing)
                  : *prob.forcing;
    ypair->scale_gamma = prob.gamma - prob.nu;
  }
  {
    double defect = 0.0, scale = 1.0;
    if (ypair) {
      for (int smp = 0; smp < M; ++smp) {
        const Complex* yp0 = current.y_prime->at(smp, 0);
        const Complex* y0 = ypair->y->at(smp, 0);
        for (int i = 0; i < ush.size() * e; ++i)
          defect = std::max(defect, std::abs(yp0[i] - y0[i]));
      }
      if (defect > kInitTol * scale)
        throw std::domain_error("picard_map: current pair does not carry u'_0");
    }
  }

  // Z = rough convolution of Y, back at scale gamma
  std::optional<ControlledEnsemble> z;
  if (ypair)
    z = rough_convolution(*ypair, prob.prop_cache, prob.nu, prob.m, false).first;

  // F and H
  std::optional<FieldEnsemble> f_ens, h_out;
  if (prob.f_coeff) {
    FieldEnsemble fv =
        evaluate_coeff(prob.f_coeff, *current.y, ush, grid);
    f_ens = bochner_convolution(fv, *prob.prop_cache);
  }
  if (prob.h_coeff) {
    FieldShape hsh = ush;
    hsh.channels = ush.channels * prob.driver->dim_d;
    FieldEnsemble hv = evaluate_coeff(prob.h_coeff, *current.y, hsh, grid);
    hv.adapted = true;
    h_out = ito_convolution(hv, *prob.driver, *prob.prop_cache);
  }

  // u_out = S_{0,.} xi + F + Z + H
  auto u_out = std::make_shared<FieldEnsemble>(ush, current.y->grid_ptr(), M);
  u_out->adapted = true;
  parallel_for(M, [&](int smp) {
    const auto& xi = prob.xi_of(smp);
    std::vector<Complex> state(xi.coef().data(),
                               xi.coef().data() + xi.coef().size());
    std::copy(state.begin(), state.end(), u_out->at(smp, 0));
    for (int j = 0; j < grid.num_steps(); ++j) {
      prob.prop_cache->apply_step(j, state.data(), ush.channels);
      std::copy(state.begin(), state.end(), u_out->at(smp, j + 1));
    }
  });
  if (f_ens) *u_out += *f_ens;
  if (z) *u_out += *z->y;
  if (h_out) *u_out += *h_out;

  // u'_out = Y
  std::shared_ptr<const FieldEnsemble> yp_out;
  if (ypair) {
    yp_out = ypair->y;
  } else {
    FieldShape ypsh = ush;
    ypsh.channels = ush.channels * e;
    auto zero = std::make_shared<FieldEnsemble>(ypsh, current.y->grid_ptr(), M);
    zero->adapted = true;
    yp_out = zero;
  }

  // martingale tag: centered parts of Z and H
  std::vector<std::pair<double, std::shared_ptr<const TwoParamField>>> mart;
  if (z && z->remainder_tag.martingale)
    mart.emplace_back(1.0, z->remainder_tag.martingale);
  if (h_out) {
    auto h_shared = std::make_shared<FieldEnsemble>(std::move(*h_out));
    mart.emplace_back(1.0, mild_delta_of(h_shared, prob.prop_cache));
  }
  std::shared_ptr<const TwoParamField> mart_sum;
  if (!mart.empty()) mart_sum = linear_comb_two_param(std::move(mart));

  auto out = make_controlled(u_out, yp_out, prob.lift, prob.gamma, prob.exps,
                             std::move(mart_sum));
  return out;
}

// ---- window restriction ------------------------------------------------------

namespace {

std::shared_ptr<const TimeGrid> restrict_grid(const TimeGrid& g, int a, int b) {
  std::vector<double> nodes(b - a + 1);
  for (int i = a; i <= b; ++i) nodes[i - a] = g.t(i) - g.t(a);
  nodes[0] = 0.0;
  auto out = std::make_shared<TimeGrid>(TimeGrid::from_nodes(std::move(nodes)));
  const int steps = b - a;
  if ((steps & (steps - 1)) == 0) {
    int d = 0;
    while ((1 << d) < steps) ++d;
    const_cast<TimeGrid&>(*out).dyadic_depth = d;
  }
  return out;
}

std::shared_ptr<const LiftEnsemble> restrict_lift(const LiftEnsemble& src,
                                                  std::shared_ptr<const TimeGrid> lg,
                                                  int a, int b) {
  auto out = std::make_shared<LiftEnsemble>();
  out->grid = lg;
  out->dim_e = src.dim_e;
  out->num_samples = src.num_samples;
  out->ito_martingale = src.ito_martingale;
  out->broadcast = src.broadcast;
  const int count = src.broadcast ? 1 : src.num_samples;
  out->lifts.reserve(count);
  for (int smp = 0; smp < count; ++smp) {
    const auto& L = src.lifts[smp];
    RoughPathLift sl(lg, src.dim_e, L.sample_id());
    const int e = src.dim_e;
    for (int i = a; i <= b; ++i)
      for (int c = 0; c < e; ++c) sl.x_node(i - a)[c] = L.x_node(i)[c];
    for (int i = a; i < b; ++i)
      std::copy(L.xx_step(i), L.xx_step(i) + e * e, sl.xx_step(i - a));
    sl.finalize();
    out->lifts.push_back(std::move(sl));
  }
  return out;
}

std::shared_ptr<const BrownianDriver> restrict_driver(
    const BrownianDriver& src, std::shared_ptr<const TimeGrid> lg, int a, int b) {
  auto out = std::make_shared<BrownianDriver>();
  out->grid = lg;
  out->dim_d = src.dim_d;
  out->num_samples = src.num_samples;
  out->master_seed = src.master_seed;
  out->increments.resize(std::size_t(src.num_samples) * (b - a) * src.dim_d);
  for (int smp = 0; smp < src.num_samples; ++smp)
    for (int i = a; i < b; ++i)
      std::copy(src.incr(smp, i), src.incr(smp, i) + src.dim_d,
                out->incr(smp, i - a));
  return out;
}

std::shared_ptr<FieldEnsemble> restrict_ensemble(
    const FieldEnsemble& src, std::shared_ptr<const TimeGrid> lg, int a, int b) {
  auto out = std::make_shared<FieldEnsemble>(src.shape(), lg, src.num_samples());
  out->adapted = src.adapted;
  for (int smp = 0; smp < src.num_samples(); ++smp)
    for (int i = a; i <= b; ++i)
      std::copy(src.at(smp, i), src.at(smp, i) + src.shape().size(),
                out->at(smp, i - a));
  return out;
}

// Window copy of the problem: times shifted so the window starts at 0,
// symbols and coefficients offset accordingly, initial data replaced.
RspdeProblem restrict_problem(const RspdeProblem& prob, int a, int b,
                              std::vector<SpectralField> xi_block) {
  RspdeProblem lp = prob;
  const double t_off = prob.grid().t(a);
  auto lg = restrict_grid(prob.grid(), a, b);
  lp.lift = restrict_lift(*prob.lift, lg, a, b);
  if (prob.driver) lp.driver = restrict_driver(*prob.driver, lg, a, b);
  lp.xi = std::move(xi_block);
  if (prob.propagator->diagonal()) {
    lp.prop_cache = std::make_shared<PropagatorGridCache>(prob.propagator, *lg);
  } else {
    const auto& gen = prob.propagator->generator();
    auto a_shift = gen.a_coeff;
    GeneratorFamily g = GeneratorFamily::divergence_form(
        [a_shift, t_off](double t, std::span<const double> x) {
          return a_shift(t + t_off, x);
        },
        gen.ellipticity_K);
    auto p = std::make_shared<Propagator>(std::move(g), prob.propagator->dim_n(),
                                          prob.propagator->trunc_k(),
                                          prob.propagator->substep());
    lp.propagator = p;
    lp.prop_cache = std::make_shared<PropagatorGridCache>(p, *lg);
  }
  if (prob.f_coeff) {
    auto f = prob.f_coeff;
    lp.f_coeff = [f, t_off](double t, int smp, const SpectralField& u) {
      return f(t + t_off, smp, u);
    };
  }
  if (prob.h_coeff) {
    auto h = prob.h_coeff;
    lp.h_coeff = [h, t_off](double t, int smp, const SpectralField& u) {
      return h(t + t_off, smp, u);
    };
  }
  if (prob.gg) {
    if (prob.gg->constant_in_time()) {
      lp.gg = prob.gg;
    } else {
      auto src = prob.gg;
      lp.gg = std::make_shared<ControlledOperatorFamily>(
          src->dim_n(), src->trunc_k(), src->in_channels(), src->out_channels(),
          src->dim_e(),
          [src, a](int node, int smp) { return src->symbol(node + a, smp); },
          [src, a](int node, int smp) {
            return src->symbol_prime(node + a, smp);
          },
          false, src->deterministic(), src->smoothness_margin());
    }
  }
  if (prob.forcing) {
    const auto& fc = *prob.forcing;
    auto y = restrict_ensemble(*fc.y, lg, a, b);
    auto yp = restrict_ensemble(*fc.y_prime, lg, a, b);
    // deterministic forcing tags carry no centered part; re-derive
    lp.forcing = make_controlled(y, yp, lp.lift, fc.scale_gamma, fc.exps,
                                 nullptr);
  }
  return lp;
}

// Canonical starting pair of the fixed-point set: u = S_{0,.} xi,
// u' constant equal to G_0 xi + g_0.
ControlledEnsemble initial_pair(const RspdeProblem& prob) {
  const FieldShape& ush = prob.state_shape;
  const int e = prob.lift->dim_e;
  const int M = prob.num_samples;
  auto y = std::make_shared<FieldEnsemble>(ush, std::make_shared<TimeGrid>(prob.grid()), M);
  y->adapted = true;
  parallel_for(M, [&](int smp) {
    const auto& xi = prob.xi_of(smp);
    std::vector<Complex> state(xi.coef().data(),
                               xi.coef().data() + xi.coef().size());
    std::copy(state.begin(), state.end(), y->at(smp, 0));
    for (int j = 0; j < prob.grid().num_steps(); ++j) {
      prob.prop_cache->apply_step(j, state.data(), ush.channels);
      std::copy(state.begin(), state.end(), y->at(smp, j + 1));
    }
  });
  FieldShape ypsh = ush;
  ypsh.channels = ush.channels * e;
  auto yp = std::make_shared<FieldEnsemble>(ypsh, y->grid_ptr(), M);
  yp->adapted = true;
  for (int smp = 0; smp < M; ++smp) {
    std::vector<Complex> v(ypsh.size(), Complex(0.0, 0.0));
    if (prob.gg)
      prob.gg->apply(0, smp,
                     {prob.xi_of(smp).coef().data(),
                      std::size_t(prob.xi_of(smp).coef().size())},
                     v);
    if (prob.forcing) {
      const Complex* g0 = prob.forcing->y->at(smp, 0);
      for (int i = 0; i < ypsh.size(); ++i) v[i] += g0[i];
    }
    for (int node = 0; node < prob.grid().num_nodes(); ++node)
      std::copy(v.begin(), v.end(), yp->at(smp, node));
  }
  return make_controlled(y, yp, prob.lift, prob.gamma, prob.exps, nullptr);
}

struct BlockOutcome {
  std::shared_ptr<const FieldEnsemble> u;
  std::vector<double> trace;
};

BlockOutcome solve_block(const RspdeProblem& prob, const PicardConfig& cfg) {
  ControlledEnsemble cur = initial_pair(prob);
  BlockOutcome out;
  int worse = 0;
  for (int it = 0; it < cfg.max_iter; ++it) {
    ControlledEnsemble next = picard_map(prob, cur);
    const double d = scrp_distance(next, cur, prob.m, prob.gamma);
    out.trace.push_back(d);
    cur = std::move(next);
    if (d <= cfg.tol) break;
    const std::size_t n = out.trace.size();
    worse = (n >= 2 && out.trace[n - 1] > out.trace[n - 2]) ? worse + 1 : 0;
    if (worse >= 3) {
      std::ostringstream msg;
      msg << "Picard iteration diverges (3 increasing steps, last distance "
          << d << ")";
      throw DivergenceError(msg.str(), out.trace);
    }
  }
  out.u = cur.y;
  return out;
}

int choose_blocks(const RspdeProblem& prob, const PicardConfig& cfg) {
  const TimeGrid& grid = prob.grid();
  const int steps = grid.num_steps();
  if (cfg.epsilon > 0.0) {
    int blocks = 1;
    while (grid.horizon_T / blocks > cfg.epsilon && 2 * blocks <= steps)
      blocks *= 2;
    return blocks;
  }
  // dry-run policy: measure the ratio of two successive Picard differences
  // on the leading block; halve until it clears the target
  int blocks = 1;
  for (;;) {
    const int bsteps = steps / blocks;
    if (bsteps < 4) break;
    RspdeProblem lp = restrict_problem(prob, 0, bsteps, prob.xi);
    ControlledEnsemble u0 = initial_pair(lp);
    ControlledEnsemble u1 = picard_map(lp, u0);
    const double d1 = scrp_distance(u1, u0, lp.m, lp.gamma);
    if (d1 <= cfg.tol) break;  // already a fixed point at this size
    ControlledEnsemble u2 = picard_map(lp, u1);
    const double d2 = scrp_distance(u2, u1, lp.m, lp.gamma);
    if (d2 / d1 <= cfg.dry_run_target) break;
    if (2 * blocks > steps / 4) break;
    blocks *= 2;
  }
  return blocks;
}

}  // namespace

MildSolution solve_rspde(const RspdeProblem& prob, const PicardConfig& cfg) {
  prob.validate();
  if (cfg.tol <= 0.0) throw std::domain_error("PicardConfig: tol > 0");
  const TimeGrid& grid = prob.grid();
  const int steps = grid.num_steps();
  const int M = prob.num_samples;
  const int blocks = choose_blocks(prob, cfg);
  const int bsteps = steps / blocks;

  MildSolution sol;
  sol.subintervals = blocks;
  sol.epsilon_used = grid.horizon_T / blocks;

  auto u_glob = std::make_shared<FieldEnsemble>(
      prob.state_shape, std::make_shared<TimeGrid>(grid), M);
  u_glob->adapted = true;
  std::vector<SpectralField> xi_block = prob.xi;
  for (int k = 0; k < blocks; ++k) {
    const int a = k * bsteps, b = (k + 1) * bsteps;
    RspdeProblem lp = restrict_problem(prob, a, b, xi_block);
    BlockOutcome res = solve_block(lp, cfg);
    sol.picard_trace.push_back(std::move(res.trace));
    for (int smp = 0; smp < M; ++smp)
      for (int i = a; i <= b; ++i)
        std::copy(res.u->at(smp, i - a), res.u->at(smp, i - a) + prob.state_shape.size(),
                  u_glob->at(smp, i));
    xi_block.clear();
    xi_block.reserve(M);
    for (int smp = 0; smp < M; ++smp)
      xi_block.push_back(res.u->field(smp, b - a));
  }

  // enforce u' = G u + g exactly at every node, then recover the tag and the
  // residual from one global fixed-point application (the tag mismatch of the
  // final iterate is O(tol))
  auto up_glob =
      std::make_shared<FieldEnsemble>(derivative_of(prob, *u_glob));
  ControlledEnsemble assembled = make_controlled(u_glob, up_glob, prob.lift,
                                                 prob.gamma, prob.exps, nullptr);
  ControlledEnsemble phi = picard_map(prob, assembled);
  {
    FieldEnsemble diff(*phi.y);
    diff -= *u_glob;
    sol.residual = lm_sup_norm(diff, prob.m, prob.gamma);
  }
  sol.u = make_controlled(u_glob, up_glob, prob.lift, prob.gamma, prob.exps,
                          phi.remainder_tag.martingale);
  sol.solution_norm = scrp_norm(sol.u, prob.m, prob.gamma);
  return sol;
}

SolutionMapDistance solution_map_distance(const RspdeProblem& p1,
                                          const RspdeProblem& p2,
                                          const PicardConfig& cfg) {
  MildSolution s1 = solve_rspde(p1, cfg);
  MildSolution s2 = solve_rspde(p2, cfg);
  SolutionMapDistance out;
  out.solution_distance = scrp_distance(s1.u, s2.u, p1.m, p1.gamma);
  double rho = 0.0;
  const int ls = std::max(p1.lift->broadcast ? 1 : p1.lift->num_samples,
                          p2.lift->broadcast ? 1 : p2.lift->num_samples);
  for (int smp = 0; smp < ls; ++smp)
    rho = std::max(rho, rough_distance(p1.lift->lift(smp), p2.lift->lift(smp),
                                       p1.exps.alpha));
  out.rho_alpha = rho;
  {
    const auto& w2g = bessel_weights_pow(p1.state_shape.dim_n,
                                         p1.state_shape.trunc_k, 2.0 * p1.gamma);
    double acc = 0.0;
    for (int smp = 0; smp < p1.num_samples; ++smp) {
      const auto& a = p1.xi_of(smp);
      const auto& b = p2.xi_of(smp);
      double nsq = 0.0;
      for (int ch = 0; ch < p1.state_shape.channels; ++ch)
        for (int mo = 0; mo < p1.state_shape.modes(); ++mo) {
          const std::size_t i = std::size_t(ch) * p1.state_shape.modes() + mo;
          nsq += w2g[mo] * std::norm(a.coef()[i] - b.coef()[i]);
        }
      acc += std::pow(std::sqrt(nsq), p1.m);
    }
    out.delta_xi = std::pow(acc / p1.num_samples, 1.0 / p1.m);
  }
  if (p1.gg && p2.gg)
    out.delta_g_family =
        operator_family_distance(*p1.gg, *p2.gg, p1.lift->lift(0),
                                 p2.lift->lift(0), p1.gamma, p1.exps);
  else if (bool(p1.gg) != bool(p2.gg))
    throw std::domain_error("solution_map_distance: one family missing");
  if (p1.forcing && p2.forcing)
    out.delta_forcing =
        scrp_distance(*p1.forcing, *p2.forcing, p1.m, p1.gamma - p1.nu);
  else if (bool(p1.forcing) != bool(p2.forcing))
    throw std::domain_error("solution_map_distance: one forcing missing");
  out.rhs_aggregate =
      out.rho_alpha + out.delta_xi + out.delta_g_family + out.delta_forcing;
  return out;
}

std::vector<RegularityRow> spatial_regularity_probe(
    const MildSolution& sol, const RspdeProblem& prob,
    std::span<const double> thetas, int ladder_lo, int ladder_hi) {
  if (thetas.empty())
    throw std::domain_error("spatial_regularity_probe: empty theta list");
  const double bound = std::min({1.0 - prob.lambda, 0.5 - prob.mu,
                                 prob.exps.alpha - prob.nu});
  for (double th : thetas)
    if (!(th >= 0.0 && th < bound))
      throw std::domain_error(
          "spatial_regularity_probe: theta outside [0, (1-l)^(1/2-m)^(a-n))");
  const TimeGrid& grid = prob.grid();
  if (grid.dyadic_depth < 0)
    throw std::domain_error("spatial_regularity_probe: dyadic grid required");
  if (ladder_hi < 0) ladder_hi = grid.dyadic_depth - 1;
  if (ladder_hi <= ladder_lo)
    throw std::domain_error("spatial_regularity_probe: empty ladder");

  std::vector<RegularityRow> rows;
  const auto& u = *sol.u.y;
  for (double th : thetas) {
    std::vector<double> xs, ys;
    for (int j = ladder_lo; j <= ladder_hi; ++j) {
      const int node = grid.num_steps() >> j;
      if (node < 1) break;
      const double t = grid.t(node);
      // L^m norm over samples at this node and shifted index
      const auto& w2g = bessel_weights_pow(u.shape().dim_n, u.shape().trunc_k,
                                           2.0 * (prob.gamma + th));
      double acc = 0.0;
      for (int smp = 0; smp < u.num_samples(); ++smp) {
        const double nrm = std::sqrt(
            sobolev_norm_sq(u.span(smp, node), u.shape().channels, w2g));
        acc += std::pow(nrm, prob.m);
      }
      const double lm = std::pow(acc / u.num_samples(), 1.0 / prob.m);
      if (lm > 0.0) {
        xs.push_back(std::log(t));
        ys.push_back(std::log(lm));
      }
    }
    RegularityRow row;
    row.theta = th;
    if (xs.size() >= 2) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      const double n = double(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
      }
      row.fitted_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    rows.push_back(row);
  }
  return rows;
}

ControlledEnsemble picard_map(const RspdeProblem& prob,
                              const ControlledEnsemble& current,
                              const IndexWindow& w,
                              const std::vector<SpectralField>& xi_window) {
  if (w.begin == 0 && w.end == prob.grid().num_nodes() - 1)
    return picard_map(prob, current);
  RspdeProblem lp = restrict_problem(prob, w.begin, w.end, xi_window);
  return picard_map(lp, current);
}

}  // namespace rspde
