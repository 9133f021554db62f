#pragma once

#include <memory>
#include <optional>

#include "rspde/collocation.hpp"
#include "rspde/ensemble.hpp"
#include "rspde/rough_path.hpp"

namespace rspde {

/// Monte Carlo realization of a stochastic controlled rough path (Y, Y'):
/// Y has c1 channels at scale index `scale_gamma`, Y' has c1 x e channels
/// (channel index comp * e + j), and `remainder_tag` carries the declared
/// martingale/drift decomposition of R^Y(s,t) = dY - Y'_s dX, assembled by
/// whichever constructor produced the pair.
struct ControlledEnsemble {
  std::shared_ptr<const FieldEnsemble> y;
  std::shared_ptr<const FieldEnsemble> y_prime;
  std::shared_ptr<const LiftEnsemble> lift;
  MartingaleTaggedIncrement remainder_tag;
  SpaceIndex scale_gamma = 0.0;
  HolderExponents exps;

  const TimeGrid& grid() const { return y->grid(); }
  int num_samples() const { return y->num_samples(); }
  int channels() const { return y->shape().channels; }
};

struct ScrpNormReport {
  double y_norm = 0.0;
  double y_prime_norm = 0.0;
  double cond_remainder_norm = 0.0;
  double total = 0.0;
};

// ---- elementary two-parameter evaluators -----------------------------------

/// dY(s, t)
std::shared_ptr<const TwoParamField> delta_of(
    std::shared_ptr<const FieldEnsemble> e);
/// Y_t - S(s,t) Y_s
std::shared_ptr<const TwoParamField> mild_delta_of(
    std::shared_ptr<const FieldEnsemble> e,
    std::shared_ptr<const PropagatorGridCache> prop);
/// (S(s,t) - id) Y_s
std::shared_ptr<const TwoParamField> transport_defect_of(
    std::shared_ptr<const FieldEnsemble> e,
    std::shared_ptr<const PropagatorGridCache> prop);
/// Y'_s dX(s,t), contracting the trailing derivative channel with the lift;
/// with a propagator, S(s,t) Y'_s dX(s,t).
std::shared_ptr<const TwoParamField> gubinelli_term(
    std::shared_ptr<const FieldEnsemble> y_prime,
    std::shared_ptr<const LiftEnsemble> lift,
    std::shared_ptr<const PropagatorGridCache> prop = nullptr);

/// Canonical constructor: wires the recomputed remainder total dY - Y'_s dX
/// into the tag; `martingale` is the constructor-declared centered part
/// (null when nothing is known to be centered).
ControlledEnsemble make_controlled(
    std::shared_ptr<const FieldEnsemble> y,
    std::shared_ptr<const FieldEnsemble> y_prime,
    std::shared_ptr<const LiftEnsemble> lift, SpaceIndex gamma,
    const HolderExponents& exps,
    std::shared_ptr<const TwoParamField> martingale = nullptr);

ControlledEnsemble controlled_linear_comb(double a, const ControlledEnsemble& c1,
                                          double b, const ControlledEnsemble& c2);

// ---- operations -------------------------------------------------------------

/// The remainder R^Y with the constructor's tags.
const MartingaleTaggedIncrement& remainder(const ControlledEnsemble& c);

struct MildRemainder {
  MartingaleTaggedIncrement mild;  // Rhat = mild delta Y - S Y'_s dX
  std::shared_ptr<const TwoParamField> plain_minus_mild;  // R - Rhat
};

/// Mild remainder and the transport difference R - Rhat
/// = (S-id) Y_s + (S-id) Y'_s dX.
MildRemainder mild_remainder(const ControlledEnsemble& c,
                             std::shared_ptr<const PropagatorGridCache> prop);

/// Controlled-path norm at index gamma: ||Y||_{0,m,g} + ||dY||_{b,m,g-b}
/// + ||Y'||_{0,m,g-b} + ||dY'||_{b',m,g-b-b'} + ||E.R||_{b+b',m,g-b-b'}.
ScrpNormReport scrp_norm(const ControlledEnsemble& c, int m, SpaceIndex gamma);
ScrpNormReport scrp_norm(const ControlledEnsemble& c, int m, SpaceIndex gamma,
                         const IndexWindow& w);

/// Three-term distance between pairs, each remainder taken against its own
/// lift (the lifts may differ).
double scrp_distance(const ControlledEnsemble& c1, const ControlledEnsemble& c2,
                     int m, SpaceIndex gamma);
double scrp_distance(const ControlledEnsemble& c1, const ControlledEnsemble& c2,
                     int m, SpaceIndex gamma, const IndexWindow& w);

// ---- controlled operator families -------------------------------------------

/// Random time-dependent operator family pair (G, G') realized as spatial
/// multiplication symbols. G maps c1-channel fields to c2-channel fields
/// through the block symbol (i, j) -> channel i*c1+j; G' maps c1 channels to
/// c2 x e channels through blocks (i, l, j) -> channel (i*e + l)*c1 + j.
class ControlledOperatorFamily {
 public:
  using SymbolFn = std::function<SpectralField(int node, int sample)>;

  ControlledOperatorFamily(int dim_n, int trunc_k, int in_channels,
                           int out_channels, int dim_e, SymbolFn g,
                           SymbolFn g_prime, bool constant_in_time,
                           bool deterministic, double smoothness_margin = 0.0);

  /// Constant deterministic symbol with G' = 0.
  static ControlledOperatorFamily constant_symbol(const SpectralField& sym,
                                                  int in_channels, int dim_e);

  int in_channels() const { return c1_; }
  int out_channels() const { return c2_; }
  int dim_e() const { return dim_e_; }
  int dim_n() const { return dim_n_; }
  int trunc_k() const { return trunc_k_; }
  bool constant_in_time() const { return constant_in_time_; }
  bool deterministic() const { return deterministic_; }
  double smoothness_margin() const { return smoothness_margin_; }

  SpectralField symbol(int node, int sample) const;
  SpectralField symbol_prime(int node, int sample) const;

  /// Apply the symbol at (node, sample) to a coefficient block with
  /// `in_channels` channels; output has `out_channels` channels.
  void apply(int node, int sample, std::span<const Complex> in,
             std::span<Complex> out) const;
  void apply_prime(int node, int sample, std::span<const Complex> in,
                   std::span<Complex> out) const;

  /// Power-iteration estimate of the (g1 -> g2) operator norm of G at
  /// (node, sample); block symbols are combined in Frobenius fashion.
  double op_norm_estimate(int node, int sample, SpaceIndex g1,
                          SpaceIndex g2) const;

  /// R^G(s,t) = dG - G'_s dX as a symbol (needs the lift for dX).
  SpectralField remainder_symbol(int s, int t, int sample,
                                 const RoughPathLift& lift) const;

 private:
  int dim_n_, trunc_k_, c1_, c2_, dim_e_;
  SymbolFn g_, g_prime_;
  bool constant_in_time_, deterministic_;
  double smoothness_margin_;
  std::shared_ptr<const Collocation> col_;
  // cache for constant deterministic symbols
  mutable std::unique_ptr<SpectralField> cached_g_, cached_gp_;
};

/// Composition (G, G') o (Y, Y') = (GY, GY' + G'Y). The output martingale
/// tag is G_s applied to the input's martingale part; the drift identity
/// dG dY + R^G Y_s + G_s R^Y is recovered as total minus martingale.
ControlledEnsemble compose(std::shared_ptr<const ControlledOperatorFamily> g,
                           const ControlledEnsemble& c,
                           std::optional<SpaceIndex> out_gamma = std::nullopt);

/// Distance of two operator families in the family norm components, operator
/// norms estimated at the index pairs demanded by the composition bound.
/// Node/sample evaluation points follow the shared pair policy; deterministic
/// families are evaluated on one sample.
double operator_family_distance(const ControlledOperatorFamily& g1,
                                const ControlledOperatorFamily& g2,
                                const RoughPathLift& lift1,
                                const RoughPathLift& lift2, SpaceIndex gamma,
                                const HolderExponents& exps);

}  // namespace rspde
