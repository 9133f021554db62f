#pragma once

#include <optional>

#include "rspde/convolution.hpp"

namespace rspde {

/// Full problem data for the semilinear equation with a linear rough term:
/// du = [L u + f(t,u)] dt + (G u + g) dX + h(t,u) dW, u_0 = xi.
/// f maps to scale gamma-lambda, h (d channels) to gamma-mu, (G, G') acts
/// gamma -> gamma-nu, the forcing pair (g, g') lives at gamma-nu.
struct RspdeProblem {
  std::shared_ptr<const Propagator> propagator;
  std::shared_ptr<const PropagatorGridCache> prop_cache;
  std::shared_ptr<const LiftEnsemble> lift;
  std::shared_ptr<const BrownianDriver> driver;           // null when h absent
  std::vector<SpectralField> xi;                          // per sample or broadcast
  using CoeffFn =
      std::function<SpectralField(double t, int sample, const SpectralField& u)>;
  CoeffFn f_coeff;                                        // null = 0
  CoeffFn h_coeff;                                        // null = 0, c x d channels
  std::shared_ptr<const ControlledOperatorFamily> gg;     // null = 0
  std::optional<ControlledEnsemble> forcing;              // (g, g')
  HolderExponents exps;
  SpaceIndex gamma = 0.0;
  double lambda = 0.0;  // in [0, 1)
  double mu = 0.0;      // in [0, 1/2)
  double nu = 0.0;      // in [0, beta']
  int m = 2;
  int num_samples = 1;
  FieldShape state_shape;  // shape of u (channels = solution channels)

  const TimeGrid& grid() const { return *lift->grid; }
  const SpectralField& xi_of(int sample) const {
    return xi[xi.size() == 1 ? 0 : sample];
  }

  /// Structural checks plus a sampled Lipschitz probe of f and h
  /// (difference quotients on random fields must stay finite).
  void validate() const;
};

struct PicardConfig {
  double epsilon = 0.0;     // subinterval length; <= 0 selects automatically
  double tol = 1e-8;
  int max_iter = 40;
  std::vector<double> theta_probe = {0.1, 0.25, 0.4};
  double dry_run_target = 0.4;  // contraction ratio the auto policy aims for
};

/// Raised when the Picard trace grows for three consecutive iterations.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string msg, std::vector<double> trace)
      : std::runtime_error(std::move(msg)), trace(std::move(trace)) {}
  std::vector<double> trace;
};

struct MildSolution {
  ControlledEnsemble u;  // u' = G u + g enforced at every node
  std::vector<std::vector<double>> picard_trace;  // per subinterval
  ScrpNormReport solution_norm;
  double residual = 0.0;
  double epsilon_used = 0.0;
  int subintervals = 1;
};

/// One application of the fixed-point map
/// (u, u') -> (S_{0,.} xi + F + Z + H, G u + g) on the window. The current
/// pair must carry the window's initial data (u = xi_w, u' = G xi_w + g at
/// the left node).
ControlledEnsemble picard_map(const RspdeProblem& prob,
                              const ControlledEnsemble& current);
ControlledEnsemble picard_map(const RspdeProblem& prob,
                              const ControlledEnsemble& current,
                              const IndexWindow& w,
                              const std::vector<SpectralField>& xi_window);

/// Fixed-point solve with subinterval chaining. Subintervals are equal
/// dyadic blocks of length <= epsilon; epsilon <= 0 runs the dry-run policy
/// (halve until the measured ratio of two successive differences is at most
/// dry_run_target).
MildSolution solve_rspde(const RspdeProblem& prob, const PicardConfig& cfg);

struct SolutionMapDistance {
  double solution_distance = 0.0;
  double rhs_aggregate = 0.0;
  double rho_alpha = 0.0;
  double delta_xi = 0.0;
  double delta_g_family = 0.0;
  double delta_forcing = 0.0;
};

/// Distance of the two mild solutions against the input aggregate
/// rho_a(X, Xbar) + ||dxi||_{m,g} + family distance + forcing distance.
/// Both problems must share f and h.
SolutionMapDistance solution_map_distance(const RspdeProblem& p1,
                                          const RspdeProblem& p2,
                                          const PicardConfig& cfg);

struct RegularityRow {
  double theta = 0.0;
  double fitted_slope = 0.0;
};

/// Fits the log-log slope of t -> ||u_t||_{m, gamma+theta} on a dyadic time
/// ladder t = T 2^{-j}, j in [ladder_lo, ladder_hi]. Thetas must lie in
/// [0, (1-lambda) ^ (1/2-mu) ^ (alpha-nu)).
std::vector<RegularityRow> spatial_regularity_probe(
    const MildSolution& sol, const RspdeProblem& prob,
    std::span<const double> thetas, int ladder_lo = 2, int ladder_hi = -1);

}  // namespace rspde
