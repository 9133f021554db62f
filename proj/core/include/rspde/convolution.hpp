#pragma once

#include "rspde/controlled.hpp"
#include "rspde/sewing.hpp"

namespace rspde {

struct ConvolutionDiagnostics {
  /// sup over the fixed macro skeleton of
  /// ||mild-delta Z - A(s,t)||_{m, gamma-b-b'} / |t-s|^{a+b+b'} (the local
  /// expansion bound with eta = 0). The skeleton pins at most 128 nodes so
  /// the statistic is comparable across grid refinements.
  double local_expansion_ratio = 0.0;
  /// Norm report of Z at the shifted pair (alpha - theta, gamma + theta);
  /// the mild seminorm is the bound's subject.
  NormReport holder_report;
  /// Controlled norm of the output pair (Z, Y) at gamma + theta.
  ScrpNormReport output_scrp_norm;
};

/// Germ for the convolution of a controlled pair against the propagator:
/// A(s,t) = S(s,t)(Y_s dX(s,t) + Y'_s XX(s,t)), with the declared rates
/// z1 = a + b, z2 = a + b + b'.
Germ convolution_germ(const ControlledEnsemble& c,
                      std::shared_ptr<const PropagatorGridCache> prop);

/// Convolution of (Y, Y') against the lift through the propagator. Y's
/// channel count must be a multiple of e; the output pair (Z, Y) lives at
/// scale gamma + theta with 0 <= theta <= beta'. Needs alpha+beta+beta' > 1.
/// The output martingale tag is the mild increment of Z minus Y_s dX when
/// the lift is an Ito enhancement of an adapted pair, otherwise empty.
std::pair<ControlledEnsemble, ConvolutionDiagnostics> rough_convolution(
    const ControlledEnsemble& c, std::shared_ptr<const PropagatorGridCache> prop,
    double theta, int m = 2, bool with_diagnostics = true);

/// Normalized terminal L2 distance between the rough convolution and the
/// plain left-point Ito-sum convolution on the same grid. Requires an Ito
/// Brownian lift and an adapted integrand.
double ito_reduction_check(const ControlledEnsemble& c,
                           std::shared_ptr<const PropagatorGridCache> prop);

/// Left-endpoint transported quadrature of the Bochner convolution
/// int_0^t S(r, t) f(r) dr on the grid.
FieldEnsemble bochner_convolution(const FieldEnsemble& f_vals,
                                  const PropagatorGridCache& prop);

/// Left-point Ito convolution int_0^t S(r, t) h(r) dW_r; h has c_out x d
/// channels contracted against the driver increments. Requires the adapted
/// flag on h_vals.
FieldEnsemble ito_convolution(const FieldEnsemble& h_vals,
                              const BrownianDriver& drv,
                              const PropagatorGridCache& prop);

/// Tag of the increments of an Ito convolution output: the mild increment is
/// the centered part, the transport defect (S - id) H_s the drift.
MartingaleTaggedIncrement ito_increment_tag(
    std::shared_ptr<const FieldEnsemble> h_out,
    std::shared_ptr<const PropagatorGridCache> prop);

struct StabilityReport {
  double out_distance = 0.0;
  double rhs_aggregate = 0.0;
  double ratio = 0.0;  // out_distance / rhs_aggregate (0 when rhs is 0)
  double rho_alpha = 0.0;
  double delta_y0 = 0.0;
  double in_distance = 0.0;
};

/// Stability of the convolution: distance of outputs against
/// rho_a(X, Xbar) + ||dY_0||_{m,g} + T^{(a-b) ^ (b-b')} d_in.
StabilityReport convolution_stability(const ControlledEnsemble& c1,
                                      const ControlledEnsemble& c2,
                                      std::shared_ptr<const PropagatorGridCache> prop,
                                      double theta, int m);

}  // namespace rspde
