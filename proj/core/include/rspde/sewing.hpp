#pragma once

#include <optional>

#include "rspde/ensemble.hpp"

namespace rspde {

/// Two-parameter integrand germ A(s,t), evaluated at finest-grid node index
/// pairs (germs are closures over data stored at the finest level; every
/// macro partition is a sub-grid of it). `martingale` optionally declares the
/// centered part of A itself; `declared_rates` are the constants of the
/// two-sided defect bound used by germ_gap_check.
struct Germ {
  std::shared_ptr<const TwoParamField> eval;
  std::shared_ptr<const TwoParamField> martingale;
  struct Rates {
    double z1 = 0.0, z2 = 0.0;
    double K1 = 0.0, K2 = 0.0;
  };
  std::optional<Rates> declared_rates;
};

struct SewingConfig {
  int max_level = 8;           // dyadic diagnostic depth
  double eta = 0.0;            // output scale shift
  SpaceIndex target_gamma = 0.0;
  int m = 2;
  double accept_fraction = 0.25;  // last level diff vs first (Richardson-style)

  void validate(const Germ& g) const;
};

struct SewingResult {
  /// Limit values at every grid node, one field per (sample, node); value at
  /// node 0 is exactly zero.
  std::shared_ptr<FieldEnsemble> limit_values;
  /// L^m norms (at target_gamma + eta) of the dyadic level differences of
  /// the compensated sums over [0, T], levels 0..max_level-1.
  std::vector<double> level_diffs;
  /// log2 least-squares slope of the level differences (+inf if all vanish).
  double fitted_rate = 0.0;
  /// Richardson-style acceptance of the level decay.
  bool accepted = false;
  int num_samples = 0;
};

/// Compensated-sum limit of a germ against the propagator: for every node t,
/// the sum of S(v,t) A(r,v) over the finest partition of [0,t], with dyadic
/// level differences over [0,T] recorded as diagnostics. The grid must be
/// dyadic with depth >= max_level.
SewingResult mild_sew(const Germ& g,
                      std::shared_ptr<const PropagatorGridCache> prop,
                      const TimeGrid& grid, const SewingConfig& cfg,
                      int num_samples);

/// Balanced-tree accumulation of the compensated sum over [0, T] for one
/// sample (uniqueness proxy: must agree with the left-to-right order).
SpectralField sew_balanced_terminal(const Germ& g,
                                    const PropagatorGridCache& prop,
                                    const TimeGrid& grid, int sample);

/// Least-squares (slope, intercept) of log2 level_diffs against the level
/// index. Requires >= 3 nonzero levels; all-zero diffs return (+inf, 0).
std::pair<double, double> rate_fit(const SewingResult& r);

/// Level-decay slope implied by declared rates: the martingale part decays
/// like 2^{-n(z1 - 1/2)} and the drift part like 2^{-n(z2 - 1)}.
double predicted_level_slope(const Germ::Rates& rates);

/// Max over policy pairs of ||mild-delta A(s,t) - A(s,t)||_{m, gamma+eta}
/// divided by K1 |t-s|^{z1 - (eta+z1-z2)^+} + K2 |t-s|^{z2 - eta}.
double germ_gap_check(const SewingResult& r, const Germ& g,
                      std::shared_ptr<const PropagatorGridCache> prop, int m,
                      const SewingConfig& cfg);

}  // namespace rspde
