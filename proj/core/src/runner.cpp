#include "rspde/runner.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rspde/archive.hpp"
#include "rspde/parallel.hpp"
#include "rspde/stats.hpp"
#include "rspde/torus_lab.hpp"

namespace rspde {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// strict schema helper: unknown keys are configuration errors
void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw std::invalid_argument("config: " + ctx + " must be an object");
  for (const auto& [key, val] : j.items()) {
    (void)val;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + key + "' in " + ctx);
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void write_report(const std::string& dir, const json& rep) {
  write_text(dir + "/report.json", rep.dump(2) + "\n");
}

int finish(const std::string& dir, json& rep, std::string failed_metric) {
  if (!failed_metric.empty()) {
    rep["failed_metric"] = failed_metric;
    write_report(dir, rep);
    std::cerr << "check failed: " << failed_metric << "\n";
    return kRunCheckFailed;
  }
  write_report(dir, rep);
  return kRunOk;
}

std::shared_ptr<const TimeGrid> grid_from(const json& cfg) {
  const auto& g = cfg.at("grid");
  check_keys(g, "grid", {"depth", "horizon"});
  return std::make_shared<TimeGrid>(
      TimeGrid::dyadic(g.value("horizon", 1.0), g.at("depth").get<int>()));
}

// ---- lift command -----------------------------------------------------------

int cmd_lift(const json& cfg, const std::string& dir) {
  check_keys(cfg, "lift config",
             {"kind", "seed", "samples", "dim_e", "grid", "alpha",
              "fine_factor", "mode", "hurst", "refine_level", "path",
              "compare_sym_with"});
  const std::string kind = cfg.at("kind");
  const std::uint64_t seed = cfg.value("seed", 1ull);
  const int samples = cfg.value("samples", 1);
  const int dim_e = cfg.value("dim_e", 1);
  const double alpha = cfg.value("alpha", 0.45);
  auto grid = grid_from(cfg);

  std::shared_ptr<const LiftEnsemble> ens;
  if (kind == "smooth") {
    const std::string path_name = cfg.value("path", "sine");
    std::function<Eigen::VectorXd(double)> path;
    if (path_name == "sine") {
      path = [dim_e](double t) {
        Eigen::VectorXd v(dim_e);
        for (int c = 0; c < dim_e; ++c) v[c] = std::sin(kTwoPi * t * (c + 1));
        return v;
      };
    } else if (path_name == "circle") {
      if (dim_e != 2)
        throw std::invalid_argument("config: circle path needs dim_e = 2");
      path = [](double t) {
        Eigen::VectorXd v(2);
        v[0] = std::cos(kTwoPi * t) - 1.0;
        v[1] = std::sin(kTwoPi * t);
        return v;
      };
    } else {
      throw std::invalid_argument("config: unknown smooth path '" + path_name +
                                  "'");
    }
    ens = LiftEnsemble::broadcast_of(
        lift_smooth(path, grid, dim_e, cfg.value("fine_factor", 16)));
  } else if (kind == "brownian") {
    const std::string mode = cfg.value("mode", "ito");
    if (mode != "ito" && mode != "strat")
      throw std::invalid_argument("config: mode must be ito or strat");
    ens = lift_brownian_ensemble(
        seed, grid, dim_e,
        mode == "ito" ? BrownianMode::Ito : BrownianMode::Strat,
        cfg.value("fine_factor", 16), samples);
  } else if (kind == "fbm") {
    ens = lift_fbm_ensemble(seed, grid, dim_e, cfg.value("hurst", 0.45),
                            cfg.value("refine_level", 3), samples);
  } else {
    throw std::invalid_argument("config: unknown lift kind '" + kind + "'");
  }
  write_lift_archive(dir + "/lift.rspd", *ens);

  json rep;
  rep["kind"] = kind;
  rep["samples"] = int(ens->lifts.size());

  // Chen defect after expansion to all pairs, on a <=65-node subgrid of the
  // first few samples (the composition rule makes it rounding-level)
  double chen = 0.0;
  const int nodes = grid->num_nodes();
  const int stride = std::max(1, (nodes - 1) / 64);
  std::vector<int> sub;
  for (int i = 0; i < nodes; i += stride) sub.push_back(i);
  if (sub.back() != nodes - 1) sub.push_back(nodes - 1);
  const int check_samples = std::min<int>(int(ens->lifts.size()), 4);
  for (int smp = 0; smp < check_samples; ++smp) {
    const auto& L = ens->lifts[smp];
    PairBlockTable tab;
    tab.num_nodes = int(sub.size());
    tab.dim_e = dim_e;
    tab.data.assign(std::size_t(tab.num_nodes) * tab.num_nodes * dim_e * dim_e,
                    0.0);
    Eigen::MatrixXd x(int(sub.size()), dim_e);
    for (std::size_t i = 0; i < sub.size(); ++i) {
      for (int c = 0; c < dim_e; ++c) x(int(i), c) = L.x_node(sub[i])[c];
      for (std::size_t j = i; j < sub.size(); ++j) {
        Eigen::MatrixXd b = L.xx_pair(sub[i], sub[j]);
        double* dst = tab.block_mut(int(i), int(j));
        for (int p = 0; p < dim_e; ++p)
          for (int q = 0; q < dim_e; ++q) dst[p * dim_e + q] = b(p, q);
      }
    }
    chen = std::max(chen, chen_defect(x, tab));
  }
  rep["chen_defect_max"] = chen;

  double hx = 0.0, hxx = 0.0, sym_defect = 0.0;
  for (int smp = 0; smp < check_samples; ++smp) {
    auto [nx, nxx] = holder_norms(ens->lifts[smp], alpha);
    hx = std::max(hx, nx);
    hxx = std::max(hxx, nxx);
    const auto& L = ens->lifts[smp];
    for (int i = 0; i + 1 < nodes; ++i) {
      for (int p = 0; p < dim_e; ++p)
        for (int q = 0; q < dim_e; ++q) {
          const double sym = 0.5 * (L.xx_step(i)[p * dim_e + q] +
                                    L.xx_step(i)[q * dim_e + p]);
          const double ref = 0.5 * (L.x_node(i + 1)[p] - L.x_node(i)[p]) *
                             (L.x_node(i + 1)[q] - L.x_node(i)[q]);
          sym_defect = std::max(sym_defect, std::abs(sym - ref));
        }
    }
  }
  rep["holder_x"] = hx;
  rep["holder_xx"] = hxx;
  rep["alpha"] = alpha;
  rep["sym_defect_max"] = sym_defect;

  if (int(ens->lifts.size()) >= 50) {
    std::vector<double> xt;
    for (const auto& L : ens->lifts)
      xt.push_back(L.x_node(nodes - 1)[0] / std::sqrt(grid->horizon_T));
    rep["ks_p_xT"] = ks_p_normal(std::move(xt));
  }
  if (cfg.contains("compare_sym_with")) {
    LiftEnsemble other =
        read_lift_archive(cfg.at("compare_sym_with").get<std::string>());
    auto sym00 = [&](const LiftEnsemble& e) {
      std::vector<double> v;
      for (const auto& L : e.lifts)
        v.push_back(L.xx_pair(0, L.num_nodes() - 1)(0, 0));
      return v;
    };
    rep["sym_ks_p"] = ks2_p(sym00(*ens), sym00(other));
  }

  std::string failed;
  if (chen > 1e-12) failed = "chen_defect_max";
  return finish(dir, rep, failed);
}

// ---- sew command -------------------------------------------------------------

int cmd_sew(const json& cfg, const std::string& dir) {
  check_keys(cfg, "sew config",
             {"germ", "seed", "samples", "grid", "max_level", "eta", "m",
              "propagator", "trunc_k"});
  const std::string germ_name = cfg.at("germ");
  const std::uint64_t seed = cfg.value("seed", 1ull);
  const int samples = cfg.value("samples", 1);
  auto grid = grid_from(cfg);
  SewingConfig scfg;
  scfg.max_level = cfg.value("max_level", std::min(10, grid->dyadic_depth));
  scfg.eta = cfg.value("eta", 0.0);
  scfg.m = cfg.value("m", 2);
  const int K = cfg.value("trunc_k", 0);
  FieldShape sh{1, K, 1, true};

  const std::string prop_name = cfg.value("propagator", "identity");
  std::shared_ptr<const Propagator> prop;
  if (prop_name == "identity")
    prop = std::make_shared<Propagator>(Propagator::identity(1, K));
  else if (prop_name == "heat")
    prop = std::make_shared<Propagator>(GeneratorFamily::heat(), 1, K);
  else if (prop_name == "bessel_heat")
    prop = std::make_shared<Propagator>(GeneratorFamily::bessel_heat(), 1, K);
  else
    throw std::invalid_argument("config: unknown propagator '" + prop_name + "'");
  auto cache = std::make_shared<PropagatorGridCache>(prop, *grid);

  Germ germ;
  std::shared_ptr<BrownianDriver> drv;
  if (germ_name == "additive") {
    germ.eval = std::make_shared<LambdaTwoParam>(
        sh, [grid, sh](int, int s, int t, Complex* out) {
          std::fill(out, out + sh.size(), Complex(0.0, 0.0));
          out[sh.modes() / 2] = grid->t(t) - grid->t(s);
        });
    germ.declared_rates = Germ::Rates{2.0, 2.0, 0.0, 0.0};
  } else if (germ_name == "time_integral") {
    germ.eval = std::make_shared<LambdaTwoParam>(
        sh, [grid, sh](int, int s, int t, Complex* out) {
          std::fill(out, out + sh.size(), Complex(0.0, 0.0));
          out[sh.modes() / 2] = grid->t(s) * (grid->t(t) - grid->t(s));
        });
    germ.declared_rates = Germ::Rates{2.0, 2.0, 0.0, 1.0};
  } else if (germ_name == "young_smooth") {
    germ.eval = std::make_shared<LambdaTwoParam>(
        sh, [grid, sh](int, int s, int t, Complex* out) {
          std::fill(out, out + sh.size(), Complex(0.0, 0.0));
          const double ys = std::cos(kTwoPi * grid->t(s));
          const double dx =
              std::sin(kTwoPi * grid->t(t)) - std::sin(kTwoPi * grid->t(s));
          out[sh.modes() / 2] = ys * dx;
        });
    germ.declared_rates = Germ::Rates{2.0, 2.0, 1.0, 1.0};
  } else if (germ_name == "ito") {
    drv = std::make_shared<BrownianDriver>(
        sample_brownian(seed, grid, 1, samples));
    // W at nodes from the increments
    auto w = std::make_shared<std::vector<std::vector<double>>>(samples);
    for (int smp = 0; smp < samples; ++smp) {
      auto& path = (*w)[smp];
      path.resize(grid->num_nodes(), 0.0);
      for (int i = 0; i < grid->num_steps(); ++i)
        path[i + 1] = path[i] + drv->incr(smp, i)[0];
    }
    germ.eval = std::make_shared<LambdaTwoParam>(
        sh, [w, sh](int smp, int s, int t, Complex* out) {
          std::fill(out, out + sh.size(), Complex(0.0, 0.0));
          const auto& p = (*w)[smp];
          out[sh.modes() / 2] = p[s] * (p[t] - p[s]);
        });
    germ.martingale = germ.eval;
    germ.declared_rates = Germ::Rates{1.0, 2.0, 1.0, 0.0};
  } else {
    throw std::invalid_argument("config: unknown germ '" + germ_name + "'");
  }

  SewingResult res = mild_sew(germ, cache, *grid, scfg, samples);
  const double predicted = predicted_level_slope(*germ.declared_rates);

  std::string csv = "level,diff_Lm,fitted_slope,predicted_slope\n";
  for (std::size_t lvl = 0; lvl < res.level_diffs.size(); ++lvl)
    csv += std::to_string(lvl) + "," + fmt(res.level_diffs[lvl]) + "," +
           fmt(res.fitted_rate) + "," + fmt(predicted) + "\n";
  write_text(dir + "/sew.csv", csv);

  json rep;
  rep["germ"] = germ_name;
  rep["fitted_slope"] = res.fitted_rate;
  rep["predicted_slope"] = predicted;
  rep["accepted"] = res.accepted;
  rep["level_diffs"] = res.level_diffs;
  if (germ.declared_rates->K1 > 0.0 || germ.declared_rates->K2 > 0.0)
    rep["germ_gap_max"] = germ_gap_check(res, germ, cache, scfg.m, scfg);

  std::string failed;
  if (germ_name == "additive") {
    for (double d : res.level_diffs)
      if (d != 0.0) failed = "additive_level_diffs";
  } else if (germ_name == "young_smooth") {
    if (!(res.fitted_rate <= -0.75)) failed = "young_fitted_slope";
  } else if (germ_name == "ito") {
    if (!(res.fitted_rate >= -0.75 && res.fitted_rate <= -0.25))
      failed = "ito_fitted_slope";
  }
  return finish(dir, rep, failed);
}

// ---- solve command -----------------------------------------------------------

void apply_overrides(TorusProblemSpec& spec, const json& cfg) {
  if (!cfg.contains("overrides")) return;
  const auto& ov = cfg.at("overrides");
  check_keys(ov, "overrides",
             {"depth", "trunc_k", "samples", "m", "xi_amp", "horizon",
              "h_sigma", "g_amp"});
  if (ov.contains("depth")) spec.depth = ov.at("depth").get<int>();
  if (ov.contains("trunc_k")) spec.trunc_K = ov.at("trunc_k").get<int>();
  if (ov.contains("samples")) spec.samples = ov.at("samples").get<int>();
  if (ov.contains("m")) spec.m = ov.at("m").get<int>();
  if (ov.contains("xi_amp")) spec.xi_amp = ov.at("xi_amp").get<double>();
  if (ov.contains("horizon")) spec.horizon_T = ov.at("horizon").get<double>();
  if (ov.contains("h_sigma")) spec.h_sigma = ov.at("h_sigma").get<double>();
  if (ov.contains("g_amp")) spec.g_amp = ov.at("g_amp").get<double>();
}

PicardConfig picard_config_from(const json& cfg) {
  PicardConfig pc;
  if (cfg.contains("picard")) {
    const auto& p = cfg.at("picard");
    check_keys(p, "picard", {"epsilon", "tol", "max_iter"});
    pc.epsilon = p.value("epsilon", 0.0);
    pc.tol = p.value("tol", 1e-8);
    pc.max_iter = p.value("max_iter", 40);
  }
  return pc;
}

double hermitian_defect_max(const FieldEnsemble& e) {
  double d = 0.0;
  const int stride = std::max(1, e.num_nodes() / 64);
  for (int smp = 0; smp < std::min(e.num_samples(), 64); ++smp)
    for (int node = 0; node < e.num_nodes(); node += stride)
      d = std::max(d, hermitian_defect(e.field(smp, node)));
  return d;
}

int cmd_solve(const json& cfg, const std::string& dir) {
  check_keys(cfg, "solve config",
             {"preset", "seed", "overrides", "picard", "thetas"});
  TorusProblemSpec spec = preset(cfg.at("preset").get<std::string>());
  if (cfg.contains("seed")) spec.seed = cfg.at("seed").get<std::uint64_t>();
  apply_overrides(spec, cfg);
  PicardConfig pc = picard_config_from(cfg);
  TorusSetup setup = build_setup(spec);
  MildSolution sol = solve_rspde(setup.prob, pc);
  write_field_archive(dir + "/solution.rspd", *sol.u.y);

  json rep;
  rep["preset"] = cfg.at("preset");
  rep["picard_trace"] = sol.picard_trace;
  rep["residual"] = sol.residual;
  rep["epsilon_used"] = sol.epsilon_used;
  rep["subintervals"] = sol.subintervals;
  rep["solution_norm"] = {{"y_norm", sol.solution_norm.y_norm},
                          {"y_prime_norm", sol.solution_norm.y_prime_norm},
                          {"cond_remainder_norm",
                           sol.solution_norm.cond_remainder_norm},
                          {"total", sol.solution_norm.total}};
  rep["hermitian_defect_max"] = hermitian_defect_max(*sol.u.y);

  std::string failed;
  const std::string name = cfg.at("preset");
  const TimeGrid& grid = setup.prob.grid();
  const int last = grid.num_nodes() - 1;
  if (name == "heat_linear" && spec.xi_amp != 0.0) {
    // closed form u_T = xi exp(lambda0 T + c X_T) on the |k| = 1 pair
    double worst = 0.0;
    const double l0 = -4.0 * 9.869604401089358;  // -4 pi^2
    for (int smp = 0; smp < setup.prob.num_samples; ++smp) {
      const auto& L = setup.lift->lift(smp);
      const double xT = L.x_node(last)[0];
      SpectralField exact = setup.prob.xi_of(smp);
      exact *= std::exp(l0 * grid.horizon_T + spec.G_const * xT);
      SpectralField got = sol.u.y->field(smp, last);
      worst = std::max(worst, sobolev_norm(got - exact, 0.0) /
                                  sobolev_norm(exact, 0.0));
    }
    rep["closed_form_rel_err"] = worst;
    if (worst > 1e-3) failed = "closed_form_rel_err";
  }
  if (name == "gbm_mode") {
    // E |u_T|^2 = |xi|^2 exp((2 lambda0 + sigma^2) T), lambda0 = 0 on mode 0
    std::vector<double> sq(setup.prob.num_samples);
    for (int smp = 0; smp < setup.prob.num_samples; ++smp) {
      const double nrm = sobolev_norm(sol.u.y->field(smp, last), 0.0);
      sq[smp] = nrm * nrm;
    }
    double mean = 0.0;
    for (double v : sq) mean += v;
    mean /= sq.size();
    double var = 0.0;
    for (double v : sq) var += (v - mean) * (v - mean);
    var /= (sq.size() - 1);
    const double se = std::sqrt(var / sq.size());
    const double xi0 = sobolev_norm(setup.prob.xi_of(0), 0.0);
    const double exact =
        xi0 * xi0 * std::exp(spec.h_sigma * spec.h_sigma * grid.horizon_T);
    const double sigmas = std::abs(mean - exact) / se;
    rep["moment_rel_err_sigmas"] = sigmas;
    rep["moment_mean"] = mean;
    rep["moment_exact"] = exact;
    if (sigmas > 3.0) failed = "moment_rel_err_sigmas";
  }
  if (cfg.contains("thetas")) {
    std::vector<double> thetas = cfg.at("thetas").get<std::vector<double>>();
    auto rows = spatial_regularity_probe(sol, setup.prob, thetas);
    std::string csv = "theta,fitted_slope\n";
    for (const auto& r : rows)
      csv += fmt(r.theta) + "," + fmt(r.fitted_slope) + "\n";
    write_text(dir + "/regularity.csv", csv);
    for (const auto& r : rows)
      if (!(r.fitted_slope >= -r.theta - 0.1))
        failed = "regularity_slope_theta_" + fmt(r.theta);
  }
  if (spec.xi_amp == 0.0 && !spec.has_g()) {
    double mx = 0.0;
    for (const Complex& c : sol.u.y->raw()) mx = std::max(mx, std::abs(c));
    rep["zero_solution_max_abs"] = mx;
    if (mx != 0.0) failed = "zero_solution_max_abs";
  }
  return finish(dir, rep, failed);
}

// ---- stability command ---------------------------------------------------------

std::shared_ptr<const LiftEnsemble> rescaled_lift(const LiftEnsemble& src,
                                                  double c) {
  auto out = std::make_shared<LiftEnsemble>();
  out->grid = src.grid;
  out->dim_e = src.dim_e;
  out->num_samples = src.num_samples;
  out->ito_martingale = src.ito_martingale;
  out->broadcast = src.broadcast;
  out->lifts.reserve(src.lifts.size());
  const int e = src.dim_e;
  for (const auto& L : src.lifts) {
    RoughPathLift nl(L.grid_ptr(), e, L.sample_id());
    for (int i = 0; i < L.num_nodes(); ++i)
      for (int ch = 0; ch < e; ++ch) nl.x_node(i)[ch] = c * L.x_node(i)[ch];
    for (int i = 0; i + 1 < L.num_nodes(); ++i)
      for (int ch = 0; ch < e * e; ++ch)
        nl.xx_step(i)[ch] = c * c * L.xx_step(i)[ch];
    nl.finalize();
    out->lifts.push_back(std::move(nl));
  }
  return out;
}

int cmd_stability(const json& cfg, const std::string& dir) {
  check_keys(cfg, "stability config",
             {"target", "preset", "perturbation", "eps_ladder", "seed",
              "overrides", "picard"});
  const std::string target = cfg.value("target", "solution");
  const std::string pert = cfg.value("perturbation", "xi");
  std::vector<double> ladder = cfg.at("eps_ladder").get<std::vector<double>>();
  json rep;
  rep["target"] = target;
  rep["perturbation"] = pert;
  std::vector<double> dists, rhss;

  if (target == "solution") {
    TorusProblemSpec spec = preset(cfg.value("preset", "heat_linear"));
    if (cfg.contains("seed")) spec.seed = cfg.at("seed").get<std::uint64_t>();
    apply_overrides(spec, cfg);
    PicardConfig pc = picard_config_from(cfg);
    TorusSetup base = build_setup(spec);
    for (double eps : ladder) {
      TorusSetup other = build_setup(spec);
      RspdeProblem p2 = other.prob;
      if (pert == "xi") {
        SpectralField v(p2.state_shape);
        if (spec.trunc_K >= 2) {
          int k[1] = {2};
          v = single_mode_field(p2.state_shape, 0, {k, 1}, 0.5, true);
        } else {
          v.at(0, 0) = 1.0;
        }
        p2.xi[0] += eps * v;
      } else if (pert == "lift") {
        auto l2 = rescaled_lift(*other.lift, 1.0 + eps);
        p2.lift = l2;
        if (p2.forcing) {
          auto& fc = *p2.forcing;
          p2.forcing = make_controlled(fc.y, fc.y_prime, l2, fc.scale_gamma,
                                       fc.exps, nullptr);
        }
      } else if (pert == "g") {
        TorusProblemSpec s2 = spec;
        s2.g_amp += eps;
        p2 = build_setup(s2).prob;
        p2.lift = other.lift;  // same seed, same construction
      } else {
        throw std::invalid_argument("config: unknown perturbation '" + pert +
                                    "'");
      }
      SolutionMapDistance d = solution_map_distance(base.prob, p2, pc);
      dists.push_back(d.solution_distance);
      rhss.push_back(d.rhs_aggregate);
    }
  } else if (target == "convolution") {
    check_keys(cfg, "stability config",
               {"target", "preset", "perturbation", "eps_ladder", "seed",
                "overrides", "picard"});
    const std::uint64_t seed = cfg.value("seed", 0x57abULL);
    auto grid = std::make_shared<TimeGrid>(TimeGrid::dyadic(1.0, 8));
    const int K = 8, M = 16;
    FieldShape ush{1, K, 1, true};
    HolderExponents exps{0.43, 0.40, 0.20};
    auto lift = lift_fbm_ensemble(seed, grid, 1, 0.45, 3, M);
    auto heat = std::make_shared<Propagator>(GeneratorFamily::heat(), 1, K);
    auto cache = std::make_shared<PropagatorGridCache>(heat, *grid);
    int kv[1] = {1};
    const SpectralField w = single_mode_field(ush, 0, {kv, 1}, 0.5, true);
    int kv2[1] = {2};
    const SpectralField v = single_mode_field(ush, 0, {kv2, 1}, 0.5, true);
    auto make_pair = [&](std::shared_ptr<const LiftEnsemble> lf, double eps,
                         bool shift_y) {
      auto y = std::make_shared<FieldEnsemble>(ush, grid, M);
      auto yp = std::make_shared<FieldEnsemble>(ush, grid, M);
      y->adapted = yp->adapted = true;
      for (int smp = 0; smp < M; ++smp)
        for (int node = 0; node < grid->num_nodes(); ++node) {
          SpectralField f = w;
          f *= lf->lift(smp).x_node(node)[0];
          SpectralField base_f(ush);
          base_f.at(0, K) = 1.0;  // constant level
          f += base_f;
          if (shift_y) f += eps * v;
          y->set_field(smp, node, f);
          yp->set_field(smp, node, w);
        }
      return make_controlled(y, yp, lf, 0.0, exps, nullptr);
    };
    ControlledEnsemble c1 = make_pair(lift, 0.0, false);
    for (double eps : ladder) {
      ControlledEnsemble c2 =
          pert == "lift"
              ? make_pair(rescaled_lift(*lift, 1.0 + eps), 0.0, false)
              : make_pair(lift, eps, true);
      StabilityReport sr = convolution_stability(c1, c2, cache, 0.2, 2);
      dists.push_back(sr.out_distance);
      rhss.push_back(sr.rhs_aggregate);
    }
  } else {
    throw std::invalid_argument("config: unknown target '" + target + "'");
  }

  std::string csv = "eps,out_distance,rhs_aggregate,ratio\n";
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const double ratio = rhss[i] > 0.0 ? dists[i] / rhss[i] : 0.0;
    csv += fmt(ladder[i]) + "," + fmt(dists[i]) + "," + fmt(rhss[i]) + "," +
           fmt(ratio) + "\n";
    if (ladder[i] > 0.0 && rhss[i] > 0.0) {
      rmin = std::min(rmin, ratio);
      rmax = std::max(rmax, ratio);
    }
  }
  write_text(dir + "/stability.csv", csv);
  rep["out_distance"] = dists;
  rep["rhs_aggregate"] = rhss;
  if (rmax > 0.0) rep["ratio_spread"] = rmax / rmin;
  std::vector<double> halving;
  for (std::size_t i = 0; i + 1 < ladder.size(); ++i)
    if (ladder[i] > 0.0 && std::abs(ladder[i + 1] - 0.5 * ladder[i]) <
                               1e-12 * ladder[i] &&
        dists[i] > 0.0)
      halving.push_back(dists[i + 1] / dists[i]);
  rep["halving_ratios"] = halving;

  std::string failed;
  if (rmax > 0.0 && rmax / rmin > 3.0) failed = "ratio_spread";
  for (std::size_t i = 0; i < ladder.size(); ++i)
    if (ladder[i] == 0.0 && dists[i] != 0.0) failed = "zero_eps_distance";
  if (pert == "xi")
    for (double h : halving)
      if (!(h >= 0.4 && h <= 0.6)) failed = "halving_ratio";
  return finish(dir, rep, failed);
}

// ---- regularity command --------------------------------------------------------

int cmd_regularity(const json& cfg, const std::string& dir) {
  check_keys(cfg, "regularity config",
             {"kind", "preset", "thetas", "ladder", "seed", "overrides",
              "picard"});
  const std::string kind = cfg.value("kind", "pure_propagation");
  std::vector<double> thetas =
      cfg.value("thetas", std::vector<double>{0.1, 0.25, 0.4});
  int lo = 2, hi = -1;
  if (cfg.contains("ladder")) {
    check_keys(cfg.at("ladder"), "ladder", {"lo", "hi"});
    lo = cfg.at("ladder").value("lo", 2);
    hi = cfg.at("ladder").value("hi", -1);
  }

  TorusProblemSpec spec;
  bool pure = false;
  if (kind == "pure_propagation") {
    spec = pure_propagation_spec();
    pure = true;
    if (!cfg.contains("ladder")) {
      lo = 3;
      hi = 8;
    }
  } else if (kind == "preset") {
    spec = preset(cfg.at("preset").get<std::string>());
  } else {
    throw std::invalid_argument("config: unknown regularity kind '" + kind +
                                "'");
  }
  if (cfg.contains("seed")) spec.seed = cfg.at("seed").get<std::uint64_t>();
  apply_overrides(spec, cfg);
  PicardConfig pc = picard_config_from(cfg);
  TorusSetup setup = build_setup(spec);
  MildSolution sol = solve_rspde(setup.prob, pc);
  auto rows = spatial_regularity_probe(sol, setup.prob, thetas, lo, hi);

  std::string csv = "theta,fitted_slope,reference_slope\n";
  json jrows = json::array();
  std::string failed;
  for (const auto& r : rows) {
    csv += fmt(r.theta) + "," + fmt(r.fitted_slope) + "," + fmt(-r.theta) + "\n";
    jrows.push_back({{"theta", r.theta}, {"fitted_slope", r.fitted_slope}});
    if (pure) {
      if (std::abs(r.fitted_slope + r.theta) > 0.1)
        failed = "pure_propagation_slope_theta_" + fmt(r.theta);
    } else if (!(r.fitted_slope >= -r.theta - 0.1)) {
      failed = "regularity_slope_theta_" + fmt(r.theta);
    }
  }
  write_text(dir + "/regularity.csv", csv);
  json rep;
  rep["kind"] = kind;
  rep["rows"] = jrows;
  rep["hermitian_defect_max"] = hermitian_defect_max(*sol.u.y);
  return finish(dir, rep, failed);
}

}  // namespace

int run_command(const std::string& command, const json& config,
                const std::string& out_dir) {
  try {
    std::filesystem::create_directories(out_dir);
    if (command == "lift") return cmd_lift(config, out_dir);
    if (command == "sew") return cmd_sew(config, out_dir);
    if (command == "solve") return cmd_solve(config, out_dir);
    if (command == "stability") return cmd_stability(config, out_dir);
    if (command == "regularity") return cmd_regularity(config, out_dir);
    std::cerr << "unknown command: " << command << "\n";
    return kRunConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kRunConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kRunConfigError;
  } catch (const std::domain_error& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return kRunConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRunConfigError;
  }
}

int run_cli(const std::string& command, const std::string& config_path,
            std::optional<std::uint64_t> seed_override,
            const std::string& out_dir, int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("RSPDE_THREADS")) threads = std::atoi(env);
  }
  global_thread_count() = threads > 0 ? threads : 1;
  json cfg;
  try {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "cannot open config: " << config_path << "\n";
      return kRunConfigError;
    }
    cfg = json::parse(in);
  } catch (const std::exception& e) {
    std::cerr << "config parse error: " << e.what() << "\n";
    return kRunConfigError;
  }
  if (seed_override) cfg["seed"] = *seed_override;
  return run_command(command, cfg, out_dir);
}

}  // namespace rspde
