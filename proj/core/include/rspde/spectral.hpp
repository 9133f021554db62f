#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "rspde/grid.hpp"

namespace rspde {

using Complex = std::complex<double>;

/// Index into the Hilbert scale; the space with index gamma is the Bessel
/// space of order 2*gamma on the torus (one scale unit = two Sobolev orders).
using SpaceIndex = double;

/// Shape of a truncated Fourier field: torus dimension n, per-axis frequency
/// truncation K (|k_i| <= K), channel count, and whether the represented
/// function is real-valued (Hermitian symmetry applies per channel).
struct FieldShape {
  int dim_n = 1;
  int trunc_k = 0;
  int channels = 1;
  bool real_valued = true;

  int modes_per_axis() const { return 2 * trunc_k + 1; }
  int modes() const {
    int m = 1;
    for (int i = 0; i < dim_n; ++i) m *= modes_per_axis();
    return m;
  }
  int size() const { return channels * modes(); }
  bool same_space(const FieldShape& o) const {
    return dim_n == o.dim_n && trunc_k == o.trunc_k && channels == o.channels;
  }
};

/// Truncated Fourier representation of an element of the scale, possibly
/// vector-valued. Coefficients are stored channel-major; the flat mode index
/// of a wavevector k is sum_i (k_i + K) * (2K+1)^i.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(const FieldShape& shape)
      : shape_(shape), coef_(Eigen::VectorXcd::Zero(shape.size())) {}

  const FieldShape& shape() const { return shape_; }
  Eigen::VectorXcd& coef() { return coef_; }
  const Eigen::VectorXcd& coef() const { return coef_; }

  Complex& at(int channel, int flat_mode) {
    return coef_[channel * shape_.modes() + flat_mode];
  }
  Complex at(int channel, int flat_mode) const {
    return coef_[channel * shape_.modes() + flat_mode];
  }
  std::span<Complex> channel_span(int channel) {
    return {coef_.data() + channel * shape_.modes(),
            static_cast<std::size_t>(shape_.modes())};
  }
  std::span<const Complex> channel_span(int channel) const {
    return {coef_.data() + channel * shape_.modes(),
            static_cast<std::size_t>(shape_.modes())};
  }

  SpectralField& operator+=(const SpectralField& o) {
    coef_ += o.coef_;
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    coef_ -= o.coef_;
    return *this;
  }
  SpectralField& operator*=(double c) {
    coef_ *= c;
    return *this;
  }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) {
    a += b;
    return a;
  }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) {
    a -= b;
    return a;
  }
  friend SpectralField operator*(double c, SpectralField a) {
    a *= c;
    return a;
  }

 private:
  FieldShape shape_;
  Eigen::VectorXcd coef_;
};

// ---- mode bookkeeping -------------------------------------------------

/// Wavevector of a flat mode index (components in [-K, K]).
std::array<int, 3> mode_wavevector(const FieldShape& shape, int flat_mode);
int flat_mode_index(const FieldShape& shape, std::span<const int> k);

/// Bessel weights (1 + |2 pi k|^2), one entry per flat mode. Cached per (n, K).
const std::vector<double>& bessel_weights(int dim_n, int trunc_k);

/// weights^expo with the power table cached per (n, K, expo).
const std::vector<double>& bessel_weights_pow(int dim_n, int trunc_k,
                                              double expo);

/// |2 pi k|^2 per flat mode (homogeneous symbol of -Laplacian). Cached.
const std::vector<double>& laplace_symbols(int dim_n, int trunc_k);

// ---- norms and scale structure -----------------------------------------

/// Scale norm at index gamma: weighted l^2 over all channels with weights
/// (1+|2 pi k|^2)^{2 gamma}.
double sobolev_norm(const SpectralField& u, SpaceIndex gamma);
double sobolev_norm_sq(std::span<const Complex> coefs, int channels,
                       std::span<const double> weights_2g);

/// Ratio |u|_{g2}^{g3-g1} / (|u|_{g1}^{g3-g2} |u|_{g3}^{g2-g1}). At most 1
/// for these spectral norms (Hoelder on the mode sums gives constant one).
/// Requires g1 <= g2 <= g3 and u != 0.
double interpolation_defect(const SpectralField& u, SpaceIndex g1,
                            SpaceIndex g2, SpaceIndex g3);

/// Max over mode pairs (k, -k) and channels of |c(-k) - conj(c(k))|.
double hermitian_defect(const SpectralField& u);

/// Zero-mean Dirichlet energy |grad u|_{L2}^2 = sum |2 pi k|^2 |c_k|^2.
double dirichlet_energy(const SpectralField& u);

SpectralField single_mode_field(const FieldShape& shape, int channel,
                                std::span<const int> k, Complex value,
                                bool symmetrize = false);

// ---- generators and propagators -----------------------------------------

/// Time-dependent family of elliptic generators. Either a constant Fourier
/// multiplier (diagonal) or a divergence-form operator div(a(t,x) grad .)
/// realized on the truncated Fourier basis.
struct GeneratorFamily {
  enum class Kind { ConstantMultiplier, DivergenceForm };
  Kind kind = Kind::ConstantMultiplier;

  // constant case: k -> multiplier(k) <= 0
  std::function<double(std::span<const int>)> multiplier;

  // divergence case: (t, x) -> symmetric n x n matrix, elliptic with
  // constant ellipticity_K
  std::function<Eigen::MatrixXd(double, std::span<const double>)> a_coeff;
  double ellipticity_K = 0.0;

  static GeneratorFamily heat();         // multiplier -|2 pi k|^2
  static GeneratorFamily bessel_heat();  // multiplier -(1 + |2 pi k|^2)
  static GeneratorFamily constant(std::function<double(std::span<const int>)> m);
  static GeneratorFamily divergence_form(
      std::function<Eigen::MatrixXd(double, std::span<const double>)> a,
      double ellipticity_K);

  /// Sampled check of v^T a_t(x) v >= K |v|^2 on a (t, x, v) lattice.
  /// Returns the minimal margin; negative means a violation.
  double ellipticity_margin(int dim_n, double horizon_T, int samples = 128) const;
};

/// Two-parameter evolution family generated by a GeneratorFamily on a fixed
/// truncated spectral space. Constant multipliers act diagonally and satisfy
/// the cocycle law exactly; divergence-form generators are stepped with the
/// exponential-midpoint rule on the Galerkin matrix (order 2 in substep).
class Propagator {
 public:
  Propagator(GeneratorFamily gen, int dim_n, int trunc_k,
             double substep = 1e-2);

  static Propagator identity(int dim_n, int trunc_k);

  bool diagonal() const {
    return gen_.kind == GeneratorFamily::Kind::ConstantMultiplier;
  }
  int dim_n() const { return dim_n_; }
  int trunc_k() const { return trunc_k_; }
  double substep() const { return substep_; }
  const GeneratorFamily& generator() const { return gen_; }

  /// Multiplier per flat mode (diagonal case only).
  const std::vector<double>& multiplier_table() const;

  /// Galerkin matrix of the generator at time t (divergence case only).
  Eigen::MatrixXcd galerkin_matrix(double t) const;

  /// Apply S(s, t) in place, channel by channel. Requires s <= t.
  void apply(double s, double t, std::complex<double>* coefs,
             int channels) const;
  SpectralField apply(double s, double t, const SpectralField& u) const;

 private:
  GeneratorFamily gen_;
  int dim_n_;
  int trunc_k_;
  double substep_;
  std::vector<double> mult_table_;  // diagonal case
};

/// Per-step propagator factors on a fixed grid. For diagonal generators this
/// is exact algebra; for divergence-form generators the step matrices are
/// precomputed once so that sweeps cost one mat-vec per step.
class PropagatorGridCache {
 public:
  PropagatorGridCache(std::shared_ptr<const Propagator> prop,
                      const TimeGrid& grid);

  const Propagator& propagator() const { return *prop_; }
  const TimeGrid& grid() const { return grid_; }

  void apply_step(int i, std::complex<double>* coefs, int channels) const;
  void apply_range(int i, int j, std::complex<double>* coefs,
                   int channels) const;
  void apply_range(int i, int j, SpectralField& u) const;

 private:
  std::shared_ptr<const Propagator> prop_;
  TimeGrid grid_;
  std::vector<Eigen::MatrixXcd> step_mats_;  // divergence case
};

struct SmoothingReport {
  double forward_ratio = 0.0;     // sup |S u|_{g2} |t-s|^{g2-g1} / |u|_{g1}
  double difference_ratio = 0.0;  // sup |S u - u|_{g1} / (|t-s|^{g2-g1} |u|_{g2})
};

/// Empirical smoothing constants over a set of probes and time pairs.
/// Requires g1 <= g2 <= g1 + 1 and nonempty probe/pair sets with s < t.
SmoothingReport smoothing_ratio(const Propagator& p, SpaceIndex g1,
                                SpaceIndex g2,
                                std::span<const std::pair<double, double>> pairs,
                                std::span<const SpectralField> probes);

}  // namespace rspde
