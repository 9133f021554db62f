#include "rspde/sewing.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rspde/controlled.hpp"
#include "rspde/parallel.hpp"

namespace rspde {

void SewingConfig::validate(const Germ& g) const {
  if (max_level < 1) throw std::domain_error("SewingConfig: max_level >= 1");
  if (eta < 0.0) throw std::domain_error("SewingConfig: eta >= 0");
  if (g.declared_rates && !(eta < g.declared_rates->z2))
    throw std::domain_error("SewingConfig: eta must be < declared z2");
}

namespace {

// Compensated sum over the sub-grid {base + k*stride} covering [0, node_end],
// left-to-right: acc <- S(segment) acc + A(segment).
void compensated_sum(const Germ& g, const PropagatorGridCache& prop, int sample,
                     int stride, int segments, int channels, Complex* acc,
                     Complex* germ_buf, int fsize) {
  std::fill(acc, acc + fsize, Complex(0.0, 0.0));
  for (int k = 0; k < segments; ++k) {
    const int r = k * stride, v = (k + 1) * stride;
    prop.apply_range(r, v, acc, channels);
    g.eval->eval_one(sample, r, v, germ_buf);
    for (int i = 0; i < fsize; ++i) acc[i] += germ_buf[i];
  }
}

}  // namespace

SewingResult mild_sew(const Germ& g,
                      std::shared_ptr<const PropagatorGridCache> prop,
                      const TimeGrid& grid, const SewingConfig& cfg,
                      int num_samples) {
  cfg.validate(g);
  if (grid.dyadic_depth < 0 || grid.dyadic_depth < cfg.max_level)
    throw std::domain_error(
        "mild_sew: grid must be dyadic with depth >= max_level");
  const FieldShape shape = g.eval->field_shape();
  const int fsize = shape.size();
  const int steps = grid.num_steps();

  if (prop->grid().num_nodes() != grid.num_nodes())
    throw std::domain_error("mild_sew: propagator cache grid mismatch");
  SewingResult res;
  res.num_samples = num_samples;
  res.limit_values = std::make_shared<FieldEnsemble>(
      shape, std::make_shared<TimeGrid>(grid), num_samples);

  // limit values at every node: left-to-right recursion over the finest grid
  parallel_for(num_samples, [&](int smp) {
    std::vector<Complex> acc(fsize, Complex(0.0, 0.0));
    std::vector<Complex> buf(fsize);
    for (int j = 0; j < steps; ++j) {
      prop->apply_step(j, acc.data(), shape.channels);
      g.eval->eval_one(smp, j, j + 1, buf.data());
      for (int i = 0; i < fsize; ++i) acc[i] += buf[i];
      std::copy(acc.begin(), acc.end(), res.limit_values->at(smp, j + 1));
    }
  });

  // dyadic level differences of the compensated sums over [0, T]
  const auto& w2g = bessel_weights_pow(shape.dim_n, shape.trunc_k,
                                       2.0 * (cfg.target_gamma + cfg.eta));
  std::vector<std::vector<double>> per_sample(num_samples);
  parallel_for(num_samples, [&](int smp) {
    std::vector<Complex> acc(fsize), buf(fsize), prev;
    per_sample[smp].resize(cfg.max_level);
    for (int lvl = 0; lvl <= cfg.max_level; ++lvl) {
      const int segments = 1 << lvl;
      const int stride = steps / segments;
      compensated_sum(g, *prop, smp, stride, segments, shape.channels,
                      acc.data(), buf.data(), fsize);
      if (lvl > 0) {
        double nsq = 0.0;
        for (int c = 0; c < shape.channels; ++c)
          for (int mo = 0; mo < shape.modes(); ++mo)
            nsq += w2g[mo] *
                   std::norm(acc[c * shape.modes() + mo] -
                             prev[c * shape.modes() + mo]);
        per_sample[smp][lvl - 1] = nsq;  // squared for m=2; general below
      }
      prev = acc;
    }
  });
  // reduce in sample order; store ||A^{n+1} - A^n||_{m} with the L^m moment
  // computed from the per-sample norms
  res.level_diffs.resize(cfg.max_level);
  for (int lvl = 0; lvl < cfg.max_level; ++lvl) {
    double acc = 0.0;
    for (int smp = 0; smp < num_samples; ++smp) {
      const double nrm = std::sqrt(per_sample[smp][lvl]);
      if (cfg.m == kInfinityM)
        acc = std::max(acc, nrm);
      else
        acc += std::pow(nrm, cfg.m);
    }
    res.level_diffs[lvl] = cfg.m == kInfinityM
                               ? acc
                               : std::pow(acc / num_samples, 1.0 / cfg.m);
  }
  int nonzero = 0;
  for (double d : res.level_diffs) nonzero += d > 0.0;
  res.fitted_rate = nonzero == 0 ? std::numeric_limits<double>::infinity()
                    : nonzero >= 3
                        ? rate_fit(res).first
                        : std::numeric_limits<double>::quiet_NaN();
  const double head = res.level_diffs.front();
  const double tail = res.level_diffs.back();
  res.accepted = head == 0.0 ? tail == 0.0 : tail <= cfg.accept_fraction * head;
  return res;
}

SpectralField sew_balanced_terminal(const Germ& g,
                                    const PropagatorGridCache& prop,
                                    const TimeGrid& grid, int sample) {
  const FieldShape shape = g.eval->field_shape();
  const int fsize = shape.size();
  std::function<void(int, int, Complex*)> rec = [&](int j0, int j1,
                                                    Complex* out) {
    if (j1 - j0 == 1) {
      g.eval->eval_one(sample, j0, j1, out);
      return;
    }
    const int mid = j0 + (j1 - j0) / 2;
    std::vector<Complex> left(fsize);
    rec(j0, mid, left.data());
    rec(mid, j1, out);
    prop.apply_range(mid, j1, left.data(), shape.channels);
    for (int i = 0; i < fsize; ++i) out[i] += left[i];
  };
  SpectralField out(shape);
  rec(0, grid.num_steps(), out.coef().data());
  return out;
}

std::pair<double, double> rate_fit(const SewingResult& r) {
  // diffs at the roundoff floor of the level scale count as zero
  double top = 0.0;
  for (double d : r.level_diffs) top = std::max(top, d);
  const double floor = 1e-12 * top;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < r.level_diffs.size(); ++i)
    if (r.level_diffs[i] > floor) {
      xs.push_back(double(i));
      ys.push_back(std::log2(r.level_diffs[i]));
    }
  if (xs.empty())
    return {std::numeric_limits<double>::infinity(), 0.0};
  if (xs.size() < 3)
    throw std::domain_error("rate_fit: need >= 3 nonzero levels");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  return {slope, intercept};
}

double predicted_level_slope(const Germ::Rates& rates) {
  double slope = 0.0;
  bool any = false;
  if (rates.K1 > 0.0) {
    slope = -(rates.z1 - 0.5);
    any = true;
  }
  if (rates.K2 > 0.0) {
    const double s2 = -(rates.z2 - 1.0);
    slope = any ? std::max(slope, s2) : s2;
    any = true;
  }
  return any ? slope : -std::numeric_limits<double>::infinity();
}

double germ_gap_check(const SewingResult& r, const Germ& g,
                      std::shared_ptr<const PropagatorGridCache> prop, int m,
                      const SewingConfig& cfg) {
  if (!g.declared_rates)
    throw std::domain_error("germ_gap_check: declared rates missing");
  const auto rates = *g.declared_rates;
  const auto& grid = prop->grid();
  auto gap = linear_comb_two_param(
      {{1.0, mild_delta_of(r.limit_values, prop)}, {-1.0, g.eval}});
  const FieldShape shape = g.eval->field_shape();
  const auto& w2g = bessel_weights_pow(shape.dim_n, shape.trunc_k,
                                       2.0 * (cfg.target_gamma + cfg.eta));
  const auto pairs = pair_policy(IndexWindow{0, grid.num_nodes() - 1}, 128);
  const int fsize = shape.size();
  std::vector<Complex> buf(fsize);
  const double plus = std::max(0.0, cfg.eta + rates.z1 - rates.z2);
  double worst = 0.0;
  for (const auto& [i, j] : pairs) {
    const double tau = grid.t(j) - grid.t(i);
    double acc = 0.0;
    for (int smp = 0; smp < r.num_samples; ++smp) {
      gap->eval_one(smp, i, j, buf.data());
      double nsq = 0.0;
      for (int c = 0; c < shape.channels; ++c)
        for (int mo = 0; mo < shape.modes(); ++mo)
          nsq += w2g[mo] * std::norm(buf[c * shape.modes() + mo]);
      const double nrm = std::sqrt(nsq);
      if (m == kInfinityM)
        acc = std::max(acc, nrm);
      else
        acc += std::pow(nrm, m);
    }
    const double lm =
        m == kInfinityM ? acc : std::pow(acc / r.num_samples, 1.0 / m);
    const double bound = rates.K1 * std::pow(tau, rates.z1 - plus) +
                         rates.K2 * std::pow(tau, rates.z2 - cfg.eta);
    if (bound > 0.0) worst = std::max(worst, lm / bound);
  }
  return worst;
}

}  // namespace rspde
