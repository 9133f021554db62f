#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>

#include "rspde/grid.hpp"
#include "rspde/rng.hpp"

namespace rspde {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grid-sampled two-step rough path: first-level increments at the nodes and
/// second-level blocks on consecutive steps only. Arbitrary-pair blocks are
/// materialized through Chen composition from a prefix table, so the Chen
/// relation holds exactly by construction. X(0) = 0 after the basepoint shift.
class RoughPathLift {
 public:
  RoughPathLift() = default;
  RoughPathLift(std::shared_ptr<const TimeGrid> grid, int dim_e, int sample_id);

  const TimeGrid& grid() const { return *grid_; }
  std::shared_ptr<const TimeGrid> grid_ptr() const { return grid_; }
  int dim_e() const { return dim_e_; }
  int sample_id() const { return sample_id_; }
  int num_nodes() const { return grid_->num_nodes(); }

  double* x_node(int i) { return x_.data() + std::size_t(i) * dim_e_; }
  const double* x_node(int i) const { return x_.data() + std::size_t(i) * dim_e_; }
  double* xx_step(int i) {
    return xx_.data() + std::size_t(i) * dim_e_ * dim_e_;
  }
  const double* xx_step(int i) const {
    return xx_.data() + std::size_t(i) * dim_e_ * dim_e_;
  }

  Eigen::Map<const Eigen::VectorXd> x_at(int i) const {
    return {x_node(i), dim_e_};
  }
  Eigen::VectorXd delta_x(int i, int j) const {
    return x_at(j) - x_at(i);
  }
  /// Second-level block over (t_i, t_j), i <= j, by Chen composition (O(1)).
  Eigen::MatrixXd xx_pair(int i, int j) const;

  /// Shift so X(0) = 0 and build the Chen prefix table. Must be called after
  /// filling x/xx data and before any pair query.
  void finalize();
  bool finalized() const { return !xxp_.empty(); }

 private:
  std::shared_ptr<const TimeGrid> grid_;
  int dim_e_ = 0;
  int sample_id_ = 0;
  std::vector<double> x_;    // (N+1) x e
  std::vector<double> xx_;   // N x (e x e), consecutive steps, row-major
  std::vector<double> xxp_;  // (N+1) x (e x e), blocks over (0, t_i)
};

/// Monte Carlo ensemble of lifts over a shared grid. `ito_martingale` marks
/// enhancements whose increments and second-level blocks are conditionally
/// centered (Brownian Ito); a broadcast ensemble reuses one path for every
/// sample (deterministic drivers).
struct LiftEnsemble {
  std::shared_ptr<const TimeGrid> grid;
  int dim_e = 1;
  int num_samples = 1;
  bool ito_martingale = false;
  bool broadcast = false;
  std::vector<RoughPathLift> lifts;

  const RoughPathLift& lift(int sample) const {
    return lifts[broadcast ? 0 : sample];
  }
  static std::shared_ptr<const LiftEnsemble> broadcast_of(RoughPathLift l);
};

// ---- constructors ---------------------------------------------------------

/// Canonical lift of a smooth path: node values sampled exactly, step blocks
/// from the piecewise-linear interpolation on a fine_factor-times finer
/// subgrid (chord sums delta X (x) delta X / 2 included, so the lift is
/// geometric and exact for linear paths).
RoughPathLift lift_smooth(const std::function<Eigen::VectorXd(double)>& path,
                          std::shared_ptr<const TimeGrid> grid, int dim_e,
                          int fine_factor);

enum class BrownianMode { Ito, Strat };

RoughPathLift lift_brownian(std::uint64_t driver_seed,
                            std::shared_ptr<const TimeGrid> grid, int dim_e,
                            BrownianMode mode, int fine_factor,
                            int sample_id = 0);

std::shared_ptr<const LiftEnsemble> lift_brownian_ensemble(
    std::uint64_t master_seed, std::shared_ptr<const TimeGrid> grid, int dim_e,
    BrownianMode mode, int fine_factor, int num_samples);

/// Fractional Brownian lift: exact fGn sampling on a 2^refine_level-times
/// finer grid by circulant embedding, then the canonical geometric lift of
/// the piecewise-linear interpolation. Requires hurst in (1/3, 1/2].
RoughPathLift lift_fbm(std::uint64_t seed, std::shared_ptr<const TimeGrid> grid,
                       int dim_e, double hurst, int refine_level,
                       int sample_id = 0);

std::shared_ptr<const LiftEnsemble> lift_fbm_ensemble(
    std::uint64_t master_seed, std::shared_ptr<const TimeGrid> grid, int dim_e,
    double hurst, int refine_level, int num_samples);

/// Lift with X = 0 and XX = 0 (used when no rough term is present).
std::shared_ptr<const LiftEnsemble> zero_lift_ensemble(
    std::shared_ptr<const TimeGrid> grid, int dim_e);

// ---- validation and metric -----------------------------------------------

/// Dense table of second-level blocks over all node pairs.
struct PairBlockTable {
  int num_nodes = 0;
  int dim_e = 0;
  std::vector<double> data;  // (i, j) -> e x e row-major, i <= j

  Eigen::Map<const RowMat> block(int i, int j) const {
    return {data.data() +
                (std::size_t(i) * num_nodes + j) * dim_e * dim_e,
            dim_e, dim_e};
  }
  double* block_mut(int i, int j) {
    return data.data() + (std::size_t(i) * num_nodes + j) * dim_e * dim_e;
  }
};

PairBlockTable expand_all_pairs(const RoughPathLift& lift);

/// Max over node triples s <= r <= t of
/// |XX(s,t) - XX(s,r) - XX(r,t) - dX(s,r) (x) dX(r,t)| (Frobenius).
double chen_defect(const Eigen::MatrixXd& x_full, const PairBlockTable& xx_full);

/// (sup |dX(s,t)| / |t-s|^a, sup |XX(s,t)| / |t-s|^{2a}) over the shared
/// pair-enumeration policy.
std::pair<double, double> holder_norms(const RoughPathLift& lift, double alpha);

/// Rough-path distance |dX - dXbar|_a + |XX - XXbar|_{2a} over the policy
/// pairs. Grids and dimensions must agree.
double rough_distance(const RoughPathLift& a, const RoughPathLift& b,
                      double alpha);

}  // namespace rspde
