#include "rspde/rough_path.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace rspde {

RoughPathLift::RoughPathLift(std::shared_ptr<const TimeGrid> grid, int dim_e,
                             int sample_id)
    : grid_(std::move(grid)), dim_e_(dim_e), sample_id_(sample_id) {
  const int nodes = grid_->num_nodes();
  x_.assign(std::size_t(nodes) * dim_e_, 0.0);
  xx_.assign(std::size_t(nodes - 1) * dim_e_ * dim_e_, 0.0);
}

void RoughPathLift::finalize() {
  const int nodes = grid_->num_nodes();
  const int e = dim_e_;
  // basepoint shift
  std::vector<double> x0(x_.begin(), x_.begin() + e);
  for (int i = 0; i < nodes; ++i)
    for (int c = 0; c < e; ++c) x_[std::size_t(i) * e + c] -= x0[c];
  // Chen prefix: XX(0, t_{i+1}) = XX(0, t_i) + XX(t_i, t_{i+1}) + X_i (x) dX_i
  xxp_.assign(std::size_t(nodes) * e * e, 0.0);
  for (int i = 0; i + 1 < nodes; ++i) {
    const double* prev = xxp_.data() + std::size_t(i) * e * e;
    double* next = xxp_.data() + std::size_t(i + 1) * e * e;
    const double* step = xx_step(i);
    const double* xi = x_node(i);
    const double* xj = x_node(i + 1);
    for (int p = 0; p < e; ++p)
      for (int q = 0; q < e; ++q)
        next[p * e + q] =
            prev[p * e + q] + step[p * e + q] + xi[p] * (xj[q] - xi[q]);
  }
}

Eigen::MatrixXd RoughPathLift::xx_pair(int i, int j) const {
  if (xxp_.empty()) throw std::logic_error("RoughPathLift: not finalized");
  if (i > j) throw std::domain_error("xx_pair: need i <= j");
  const int e = dim_e_;
  Eigen::MatrixXd out(e, e);
  const double* pi = xxp_.data() + std::size_t(i) * e * e;
  const double* pj = xxp_.data() + std::size_t(j) * e * e;
  const double* xi = x_node(i);
  const double* xj = x_node(j);
  for (int p = 0; p < e; ++p)
    for (int q = 0; q < e; ++q)
      out(p, q) = pj[p * e + q] - pi[p * e + q] - xi[p] * (xj[q] - xi[q]);
  return out;
}

std::shared_ptr<const LiftEnsemble> LiftEnsemble::broadcast_of(RoughPathLift l) {
  auto ens = std::make_shared<LiftEnsemble>();
  ens->grid = l.grid_ptr();
  ens->dim_e = l.dim_e();
  ens->num_samples = 1;
  ens->broadcast = true;
  ens->lifts.push_back(std::move(l));
  return ens;
}

// ---- constructors ---------------------------------------------------------

namespace {

// Accumulate the canonical (piecewise-linear) second-level block of one
// coarse step from fine increments: sum dX(s, tau_j) (x) d_j + d_j (x) d_j / 2.
void accumulate_geometric_block(const std::vector<double>& fine_incr, int fine,
                                int e, double* block) {
  std::vector<double> run(e, 0.0);
  for (int j = 0; j < fine; ++j) {
    const double* d = fine_incr.data() + std::size_t(j) * e;
    for (int p = 0; p < e; ++p)
      for (int q = 0; q < e; ++q)
        block[p * e + q] += (run[p] + 0.5 * d[p]) * d[q];
    for (int p = 0; p < e; ++p) run[p] += d[p];
  }
}

// Left-point block: sum dX(s, tau_j) (x) d_j (no chord balance).
void accumulate_leftpoint_block(const std::vector<double>& fine_incr, int fine,
                                int e, double* block) {
  std::vector<double> run(e, 0.0);
  for (int j = 0; j < fine; ++j) {
    const double* d = fine_incr.data() + std::size_t(j) * e;
    for (int p = 0; p < e; ++p)
      for (int q = 0; q < e; ++q) block[p * e + q] += run[p] * d[q];
    for (int p = 0; p < e; ++p) run[p] += d[p];
  }
}

}  // namespace

RoughPathLift lift_smooth(const std::function<Eigen::VectorXd(double)>& path,
                          std::shared_ptr<const TimeGrid> grid, int dim_e,
                          int fine_factor) {
  if (fine_factor < 1) throw std::domain_error("lift_smooth: fine_factor >= 1");
  RoughPathLift lift(grid, dim_e, 0);
  const int steps = grid->num_steps();
  for (int i = 0; i <= steps; ++i) {
    Eigen::VectorXd v = path(grid->t(i));
    for (int c = 0; c < dim_e; ++c) lift.x_node(i)[c] = v[c];
  }
  std::vector<double> fine_incr(std::size_t(fine_factor) * dim_e);
  for (int i = 0; i < steps; ++i) {
    const double s = grid->t(i), t = grid->t(i + 1);
    Eigen::VectorXd prev = path(s);
    for (int j = 0; j < fine_factor; ++j) {
      const double tau = s + (t - s) * (j + 1) / fine_factor;
      Eigen::VectorXd cur = path(tau);
      for (int c = 0; c < dim_e; ++c)
        fine_incr[std::size_t(j) * dim_e + c] = cur[c] - prev[c];
      prev = std::move(cur);
    }
    accumulate_geometric_block(fine_incr, fine_factor, dim_e, lift.xx_step(i));
  }
  lift.finalize();
  return lift;
}

RoughPathLift lift_brownian(std::uint64_t driver_seed,
                            std::shared_ptr<const TimeGrid> grid, int dim_e,
                            BrownianMode mode, int fine_factor, int sample_id) {
  if (fine_factor < 1) throw std::domain_error("lift_brownian: fine_factor >= 1");
  RoughPathLift lift(grid, dim_e, sample_id);
  Rng rng(driver_seed);
  const int steps = grid->num_steps();
  std::vector<double> fine_incr(std::size_t(fine_factor) * dim_e);
  for (int i = 0; i < steps; ++i) {
    const double dt_fine = grid->dt(i) / fine_factor;
    const double sd = std::sqrt(dt_fine);
    for (int j = 0; j < fine_factor; ++j)
      for (int c = 0; c < dim_e; ++c)
        fine_incr[std::size_t(j) * dim_e + c] = sd * rng.next_gaussian();
    double* block = lift.xx_step(i);
    accumulate_leftpoint_block(fine_incr, fine_factor, dim_e, block);
    if (mode == BrownianMode::Strat) {
      const double half_dt = 0.5 * grid->dt(i);
      for (int c = 0; c < dim_e; ++c) block[c * dim_e + c] += half_dt;
    }
    for (int c = 0; c < dim_e; ++c) {
      double sum = 0.0;
      for (int j = 0; j < fine_factor; ++j)
        sum += fine_incr[std::size_t(j) * dim_e + c];
      lift.x_node(i + 1)[c] = lift.x_node(i)[c] + sum;
    }
  }
  lift.finalize();
  return lift;
}

std::shared_ptr<const LiftEnsemble> lift_brownian_ensemble(
    std::uint64_t master_seed, std::shared_ptr<const TimeGrid> grid, int dim_e,
    BrownianMode mode, int fine_factor, int num_samples) {
  auto ens = std::make_shared<LiftEnsemble>();
  ens->grid = grid;
  ens->dim_e = dim_e;
  ens->num_samples = num_samples;
  ens->ito_martingale = (mode == BrownianMode::Ito);
  ens->lifts.resize(num_samples);
  for (int s = 0; s < num_samples; ++s)
    ens->lifts[s] = lift_brownian(derive_seed(master_seed, kStreamLift, s), grid,
                                  dim_e, mode, fine_factor, s);
  return ens;
}

// ---- fractional Brownian sampling -----------------------------------------

namespace {

// Circulant-embedding eigenvalues for fGn with unit step, cached per (F, H).
const std::vector<double>& fgn_eigenvalues(int fine_steps, double hurst) {
  static std::mutex mu;
  static std::map<std::pair<int, double>, std::unique_ptr<std::vector<double>>>
      cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{fine_steps, hurst}];
  if (!slot) {
    const int m = 2 * fine_steps;
    auto cov = [&](int j) {
      const double a = std::abs(j - 1.0), b = std::abs(double(j)),
                   c = std::abs(j + 1.0);
      return 0.5 * (std::pow(a, 2 * hurst) - 2 * std::pow(b, 2 * hurst) +
                    std::pow(c, 2 * hurst));
    };
    std::vector<std::complex<double>> ring(m);
    for (int j = 0; j < fine_steps; ++j) ring[j] = cov(j);
    ring[fine_steps] = cov(fine_steps);
    for (int j = 1; j < fine_steps; ++j) ring[m - j] = cov(j);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> ev(m);
    fft.fwd(ev, ring);
    auto v = std::make_unique<std::vector<double>>(m);
    for (int k = 0; k < m; ++k) {
      double lam = ev[k].real();
      if (lam < 0.0) {
        if (lam < -1e-9)
          throw std::runtime_error("fgn embedding: negative eigenvalue");
        lam = 0.0;
      }
      (*v)[k] = lam;
    }
    slot = std::move(v);
  }
  return *slot;
}

// One fGn trace of length F with unit step (scaled by step^H by the caller).
void sample_fgn(Rng& rng, int fine_steps, double hurst, std::vector<double>& out) {
  const auto& lam = fgn_eigenvalues(fine_steps, hurst);
  const int m = 2 * fine_steps;
  std::vector<std::complex<double>> w(m);
  w[0] = std::sqrt(lam[0]) * rng.next_gaussian();
  w[fine_steps] = std::sqrt(lam[fine_steps]) * rng.next_gaussian();
  for (int k = 1; k < fine_steps; ++k) {
    const double g1 = rng.next_gaussian(), g2 = rng.next_gaussian();
    const double s = std::sqrt(lam[k] / 2.0);
    w[k] = std::complex<double>(s * g1, s * g2);
    w[m - k] = std::conj(w[k]);
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> z(m);
  fft.fwd(z, w);
  const double scale = 1.0 / std::sqrt(double(m));
  out.resize(fine_steps);
  for (int j = 0; j < fine_steps; ++j) out[j] = scale * z[j].real();
}

}  // namespace

RoughPathLift lift_fbm(std::uint64_t seed, std::shared_ptr<const TimeGrid> grid,
                       int dim_e, double hurst, int refine_level,
                       int sample_id) {
  if (!(hurst > 1.0 / 3.0 && hurst <= 0.5))
    throw std::domain_error("lift_fbm: hurst must lie in (1/3, 1/2]");
  if (refine_level < 0) throw std::domain_error("lift_fbm: refine_level >= 0");
  if (grid->dyadic_depth < 0)
    throw std::domain_error("lift_fbm: dyadic grid required");
  RoughPathLift lift(grid, dim_e, sample_id);
  const int steps = grid->num_steps();
  const int fine_factor = 1 << refine_level;
  const int F = steps * fine_factor;
  const double step_h = std::pow(grid->horizon_T / F, hurst);
  Rng rng(seed);
  std::vector<std::vector<double>> incr(dim_e);
  for (int c = 0; c < dim_e; ++c) {
    sample_fgn(rng, F, hurst, incr[c]);
    for (auto& v : incr[c]) v *= step_h;
  }
  std::vector<double> fine_incr(std::size_t(fine_factor) * dim_e);
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j < fine_factor; ++j)
      for (int c = 0; c < dim_e; ++c)
        fine_incr[std::size_t(j) * dim_e + c] = incr[c][i * fine_factor + j];
    accumulate_geometric_block(fine_incr, fine_factor, dim_e, lift.xx_step(i));
    for (int c = 0; c < dim_e; ++c) {
      double sum = 0.0;
      for (int j = 0; j < fine_factor; ++j)
        sum += fine_incr[std::size_t(j) * dim_e + c];
      lift.x_node(i + 1)[c] = lift.x_node(i)[c] + sum;
    }
  }
  lift.finalize();
  return lift;
}

std::shared_ptr<const LiftEnsemble> lift_fbm_ensemble(
    std::uint64_t master_seed, std::shared_ptr<const TimeGrid> grid, int dim_e,
    double hurst, int refine_level, int num_samples) {
  auto ens = std::make_shared<LiftEnsemble>();
  ens->grid = grid;
  ens->dim_e = dim_e;
  ens->num_samples = num_samples;
  ens->lifts.resize(num_samples);
  for (int s = 0; s < num_samples; ++s)
    ens->lifts[s] = lift_fbm(derive_seed(master_seed, kStreamLift, s), grid,
                             dim_e, hurst, refine_level, s);
  return ens;
}

std::shared_ptr<const LiftEnsemble> zero_lift_ensemble(
    std::shared_ptr<const TimeGrid> grid, int dim_e) {
  RoughPathLift lift(grid, dim_e, 0);
  lift.finalize();
  return LiftEnsemble::broadcast_of(std::move(lift));
}

// ---- validation and metric -----------------------------------------------

PairBlockTable expand_all_pairs(const RoughPathLift& lift) {
  PairBlockTable tab;
  tab.num_nodes = lift.num_nodes();
  tab.dim_e = lift.dim_e();
  tab.data.assign(std::size_t(tab.num_nodes) * tab.num_nodes * tab.dim_e *
                      tab.dim_e,
                  0.0);
  for (int i = 0; i < tab.num_nodes; ++i)
    for (int j = i; j < tab.num_nodes; ++j) {
      Eigen::MatrixXd b = lift.xx_pair(i, j);
      double* dst = tab.block_mut(i, j);
      for (int p = 0; p < tab.dim_e; ++p)
        for (int q = 0; q < tab.dim_e; ++q) dst[p * tab.dim_e + q] = b(p, q);
    }
  return tab;
}

double chen_defect(const Eigen::MatrixXd& x_full, const PairBlockTable& xx) {
  const int nodes = xx.num_nodes;
  const int e = xx.dim_e;
  if (x_full.rows() != nodes || x_full.cols() != e)
    throw std::domain_error("chen_defect: shape mismatch between X and XX");
  double defect = 0.0;
  for (int s = 0; s < nodes; ++s)
    for (int r = s; r < nodes; ++r)
      for (int t = r; t < nodes; ++t) {
        double acc = 0.0;
        auto bst = xx.block(s, t);
        auto bsr = xx.block(s, r);
        auto brt = xx.block(r, t);
        for (int p = 0; p < e; ++p)
          for (int q = 0; q < e; ++q) {
            const double cross =
                (x_full(r, p) - x_full(s, p)) * (x_full(t, q) - x_full(r, q));
            const double d = bst(p, q) - bsr(p, q) - brt(p, q) - cross;
            acc += d * d;
          }
        defect = std::max(defect, std::sqrt(acc));
      }
  return defect;
}

std::pair<double, double> holder_norms(const RoughPathLift& lift, double alpha) {
  const auto pairs = pair_policy(IndexWindow{0, lift.num_nodes() - 1});
  const int e = lift.dim_e();
  double nx = 0.0, nxx = 0.0;
  for (const auto& [i, j] : pairs) {
    const double tau = lift.grid().t(j) - lift.grid().t(i);
    double dx2 = 0.0;
    for (int c = 0; c < e; ++c) {
      const double d = lift.x_node(j)[c] - lift.x_node(i)[c];
      dx2 += d * d;
    }
    nx = std::max(nx, std::sqrt(dx2) / std::pow(tau, alpha));
    nxx = std::max(nxx, lift.xx_pair(i, j).norm() / std::pow(tau, 2 * alpha));
  }
  return {nx, nxx};
}

double rough_distance(const RoughPathLift& a, const RoughPathLift& b,
                      double alpha) {
  if (a.num_nodes() != b.num_nodes() || a.dim_e() != b.dim_e())
    throw std::domain_error("rough_distance: grid or dimension mismatch");
  for (int i = 0; i < a.num_nodes(); ++i)
    if (a.grid().t(i) != b.grid().t(i))
      throw std::domain_error("rough_distance: grids differ");
  const auto pairs = pair_policy(IndexWindow{0, a.num_nodes() - 1});
  const int e = a.dim_e();
  double nx = 0.0, nxx = 0.0;
  for (const auto& [i, j] : pairs) {
    const double tau = a.grid().t(j) - a.grid().t(i);
    double dx2 = 0.0;
    for (int c = 0; c < e; ++c) {
      const double d = (a.x_node(j)[c] - a.x_node(i)[c]) -
                       (b.x_node(j)[c] - b.x_node(i)[c]);
      dx2 += d * d;
    }
    nx = std::max(nx, std::sqrt(dx2) / std::pow(tau, alpha));
    nxx = std::max(nxx, (a.xx_pair(i, j) - b.xx_pair(i, j)).norm() /
                            std::pow(tau, 2 * alpha));
  }
  return nx + nxx;
}

}  // namespace rspde
