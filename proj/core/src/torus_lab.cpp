#include "rspde/torus_lab.hpp"

#include <cmath>
#include <stdexcept>

namespace rspde {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

SpectralField TorusProblemSpec::make_xi() const {
  FieldShape sh{dim_n, trunc_K, 1, true};
  SpectralField xi(sh);
  if (band_lo == 0) {
    if (trunc_K == 0) {
      xi.at(0, 0) = xi_amp;
      return xi;
    }
    std::vector<int> k(dim_n, 0);
    k[0] = 1;
    xi.at(0, flat_mode_index(sh, {k.data(), k.size()})) = 0.5 * xi_amp;
    k[0] = -1;
    xi.at(0, flat_mode_index(sh, {k.data(), k.size()})) = 0.5 * xi_amp;
    return xi;
  }
  // octave-flat band: equal energy per frequency octave
  std::vector<int> k(dim_n, 0);
  for (int kk = band_lo; kk <= band_hi && kk <= trunc_K; ++kk) {
    const double amp = xi_amp / std::sqrt(double(kk));
    k[0] = kk;
    xi.at(0, flat_mode_index(sh, {k.data(), k.size()})) = amp;
    k[0] = -kk;
    xi.at(0, flat_mode_index(sh, {k.data(), k.size()})) = amp;
  }
  return xi;
}

SpectralField TorusProblemSpec::make_G_symbol() const {
  FieldShape sh{dim_n, trunc_K, dim_e, true};
  SpectralField g(sh);
  for (int c = 0; c < dim_e; ++c) {
    std::vector<int> k(dim_n, 0);
    g.at(c, flat_mode_index(sh, {k.data(), k.size()})) += G_const;
    if (G_cos != 0.0 && trunc_K >= 1) {
      k[0] = 1;
      g.at(c, flat_mode_index(sh, {k.data(), k.size()})) += 0.5 * G_cos;
      k[0] = -1;
      g.at(c, flat_mode_index(sh, {k.data(), k.size()})) += 0.5 * G_cos;
    }
  }
  return g;
}

SpectralField TorusProblemSpec::make_g_symbol() const {
  FieldShape sh{dim_n, trunc_K, dim_e, true};
  SpectralField g(sh);
  if (g_amp != 0.0 && trunc_K >= 1) {
    for (int c = 0; c < dim_e; ++c) {
      std::vector<int> k(dim_n, 0);
      k[0] = 1;
      g.at(c, flat_mode_index(sh, {k.data(), k.size()})) +=
          Complex(0.0, -0.5 * g_amp);
      k[0] = -1;
      g.at(c, flat_mode_index(sh, {k.data(), k.size()})) +=
          Complex(0.0, 0.5 * g_amp);
    }
  }
  return g;
}

TorusProblemSpec preset(const std::string& name) {
  TorusProblemSpec s;
  if (name == "heat_linear") {
    s.trunc_K = 4;
    s.depth = 12;
    s.samples = 2;
    s.seed = 0x5eedA001ULL;
    s.G_const = 0.5;
    s.driver = DriverKind::SmoothSine;
    s.fine_factor = 8;
    s.exps = {0.5, 0.45, 0.3};
  } else if (name == "divform_rough") {
    s.trunc_K = 16;
    s.depth = 7;
    s.samples = 32;
    s.seed = 0x5eedA002ULL;
    s.a_var = 0.5;
    s.ellipticity_K = 0.5;
    s.substep = 2e-3;
    s.G_cos = 1.0;
    s.g_amp = 0.2;
    s.driver = DriverKind::Fbm;
    s.hurst = 0.45;
    s.refine_level = 3;
    s.exps = {0.43, 0.40, 0.20};
  } else if (name == "gbm_mode") {
    s.trunc_K = 0;
    s.depth = 8;
    s.samples = 10000;
    s.seed = 0x5eedA003ULL;
    s.h_sigma = 0.5;
    s.driver = DriverKind::None;
    s.exps = {0.45, 0.40, 0.30};
  } else if (name == "full_mix") {
    s = preset("divform_rough");
    s.seed = 0x5eedA004ULL;
    s.f_lin = 1.0;
    s.f_grad = 0.1;
    s.h_sigma = 0.3;
  } else {
    throw std::domain_error("preset: unknown scenario '" + name + "'");
  }
  return s;
}

TorusProblemSpec pure_propagation_spec(int trunc_K, int depth, double horizon_T) {
  TorusProblemSpec s;
  s.trunc_K = trunc_K;
  s.depth = depth;
  s.horizon_T = horizon_T;
  s.samples = 1;
  s.seed = 0x5eedA005ULL;
  s.driver = DriverKind::None;
  s.band_lo = 2;
  s.band_hi = trunc_K;
  s.exps = {0.45, 0.40, 0.30};
  return s;
}

RspdeProblem build_problem(const TorusProblemSpec& spec,
                           std::shared_ptr<const LiftEnsemble> lift,
                           std::shared_ptr<const BrownianDriver> driver,
                           const HolderExponents& exps, int m) {
  RspdeProblem prob;
  prob.state_shape = FieldShape{spec.dim_n, spec.trunc_K, 1, true};
  prob.exps = exps;
  prob.m = m;
  prob.gamma = 0.0;
  prob.lambda = 0.5;  // f depends on the gradient: one Sobolev order down
  prob.mu = 0.0;
  prob.nu = 0.0;
  prob.num_samples = spec.samples;
  prob.lift = lift;
  prob.driver = std::move(driver);

  // generator
  GeneratorFamily gen;
  if (spec.identity_diffusion()) {
    gen = GeneratorFamily::heat();
  } else {
    auto a_fn = spec.a_custom;
    if (!a_fn) {
      const double av = spec.a_var;
      const int n = spec.dim_n;
      a_fn = [av, n](double t, std::span<const double> x) {
        double sx = t;
        for (double xi : x) sx += xi;
        return Eigen::MatrixXd::Identity(n, n) *
               (1.0 + av * std::sin(kTwoPi * sx));
      };
    }
    gen = GeneratorFamily::divergence_form(std::move(a_fn), spec.ellipticity_K);
    const double margin = gen.ellipticity_margin(spec.dim_n, spec.horizon_T);
    if (margin < 0.0)
      throw std::domain_error(
          "build_problem: ellipticity check failed (margin " +
          std::to_string(margin) + ")");
  }
  auto propagator = std::make_shared<Propagator>(std::move(gen), spec.dim_n,
                                                 spec.trunc_K, spec.substep);
  prob.propagator = propagator;
  prob.prop_cache =
      std::make_shared<PropagatorGridCache>(propagator, *lift->grid);

  // initial datum (deterministic, broadcast)
  prob.xi = {spec.make_xi()};

  // f through gradient collocation
  if (spec.has_f()) {
    auto col = Collocation::shared(spec.dim_n, spec.trunc_K);
    auto f_fn = spec.f_custom;
    if (!f_fn) {
      const double fl = spec.f_lin, fg = spec.f_grad;
      f_fn = [fl, fg](double, std::span<const double> x, double u,
                      std::span<const double> grad) {
        return -fl * u + fg * std::sin(kTwoPi * x[0]) * std::tanh(grad[0]);
      };
    }
    const int n = spec.dim_n;
    const FieldShape ush = prob.state_shape;
    prob.f_coeff = [col, f_fn, n, ush](double t, int,
                                       const SpectralField& u) {
      const int P = col->points();
      std::vector<Complex> gcoef(ush.modes());
      Eigen::VectorXd u_phys = col->to_phys_real(u.channel_span(0));
      std::vector<Eigen::VectorXd> g_phys(n);
      for (int a = 0; a < n; ++a) {
        spectral_gradient(ush, u.channel_span(0), a, {gcoef.data(), gcoef.size()});
        g_phys[a] = col->to_phys_real(gcoef);
      }
      Eigen::VectorXd out(P);
      std::vector<double> grad(n);
      for (int p = 0; p < P; ++p) {
        auto x = col->point(p);
        for (int a = 0; a < n; ++a) grad[a] = g_phys[a][p];
        out[p] = f_fn(t, {x.data(), std::size_t(n)}, u_phys[p],
                      {grad.data(), grad.size()});
      }
      SpectralField res(ush);
      col->from_phys_real(out, {res.coef().data(), std::size_t(res.coef().size())});
      return res;
    };
  }

  // h = sigma u, evaluated pointwise
  if (spec.has_h()) {
    auto col = Collocation::shared(spec.dim_n, spec.trunc_K);
    const double sigma = spec.h_sigma;
    const int d = spec.dim_d;
    const FieldShape ush = prob.state_shape;
    FieldShape hsh = ush;
    hsh.channels = ush.channels * d;
    prob.h_coeff = [col, sigma, d, hsh](double, int, const SpectralField& u) {
      SpectralField res(hsh);
      for (int c = 0; c < d; ++c) {
        auto dst = res.channel_span(c);
        auto src = u.channel_span(0);
        for (std::size_t i = 0; i < src.size(); ++i)
          dst[i] = sigma * src[i];
      }
      return res;
    };
  }

  // multiplication rough term and forcing
  if (spec.has_G()) {
    prob.gg = std::make_shared<ControlledOperatorFamily>(
        ControlledOperatorFamily::constant_symbol(spec.make_G_symbol(), 1,
                                                  spec.dim_e));
  }
  if (spec.has_g()) {
    FieldShape gsh{spec.dim_n, spec.trunc_K, spec.dim_e, true};
    FieldShape gpsh{spec.dim_n, spec.trunc_K, spec.dim_e * spec.dim_e, true};
    auto gy = std::make_shared<FieldEnsemble>(gsh, lift->grid, spec.samples);
    auto gyp = std::make_shared<FieldEnsemble>(gpsh, lift->grid, spec.samples);
    gy->adapted = true;
    gyp->adapted = true;
    const SpectralField gs = spec.make_g_symbol();
    for (int smp = 0; smp < spec.samples; ++smp)
      for (int node = 0; node < lift->grid->num_nodes(); ++node)
        gy->set_field(smp, node, gs);
    prob.forcing =
        make_controlled(gy, gyp, lift, prob.gamma - prob.nu, exps, nullptr);
  }
  return prob;
}

TorusSetup build_setup(const TorusProblemSpec& spec) {
  TorusSetup setup;
  auto grid = std::make_shared<TimeGrid>(
      TimeGrid::dyadic(spec.horizon_T, spec.depth));
  setup.grid = grid;
  switch (spec.driver) {
    case DriverKind::None:
      setup.lift = zero_lift_ensemble(grid, spec.dim_e);
      break;
    case DriverKind::SmoothSine: {
      const int e = spec.dim_e;
      auto path = [e](double t) {
        Eigen::VectorXd v(e);
        for (int c = 0; c < e; ++c) v[c] = std::sin(kTwoPi * t * (c + 1));
        return v;
      };
      setup.lift = LiftEnsemble::broadcast_of(
          lift_smooth(path, grid, spec.dim_e, spec.fine_factor));
      break;
    }
    case DriverKind::BrownianIto:
      setup.lift = lift_brownian_ensemble(spec.seed, grid, spec.dim_e,
                                          BrownianMode::Ito, spec.fine_factor,
                                          spec.samples);
      break;
    case DriverKind::BrownianStrat:
      setup.lift = lift_brownian_ensemble(spec.seed, grid, spec.dim_e,
                                          BrownianMode::Strat, spec.fine_factor,
                                          spec.samples);
      break;
    case DriverKind::Fbm:
      setup.lift = lift_fbm_ensemble(spec.seed, grid, spec.dim_e, spec.hurst,
                                     spec.refine_level, spec.samples);
      break;
  }
  if (spec.has_h())
    setup.driver = std::make_shared<BrownianDriver>(
        sample_brownian(derive_seed(spec.seed, kStreamBrownianDriver, 0x77),
                        grid, spec.dim_d, spec.samples));
  setup.prob = build_problem(spec, setup.lift, setup.driver, spec.exps, spec.m);
  return setup;
}

}  // namespace rspde
