#pragma once

#include <Eigen/Dense>
#include <memory>

#include "rspde/spectral.hpp"

namespace rspde {

/// Exact transform pair between truncated Fourier coefficients and values on
/// a uniform physical grid. The grid has 3K+2 points per axis, which both
/// inverts the band-limited transform exactly and de-aliases quadratic
/// products of band-limited factors (3/2-rule zero padding).
class Collocation {
 public:
  Collocation(int dim_n, int trunc_k);

  int dim_n() const { return dim_n_; }
  int trunc_k() const { return trunc_k_; }
  int points_per_axis() const { return pts_per_axis_; }
  int points() const { return pts_; }

  /// Physical coordinates of grid point p (components in [0,1)).
  std::array<double, 3> point(int p) const;

  /// One channel of coefficients -> complex values on the grid.
  void to_phys(std::span<const Complex> coefs, std::span<Complex> values) const;
  /// Values on the grid -> coefficients (exact for band-limited input;
  /// frequencies above K produced by nonlinear operations are discarded).
  void to_coef(std::span<const Complex> values, std::span<Complex> coefs) const;

  /// Real parts of the physical values of one channel.
  Eigen::VectorXd to_phys_real(std::span<const Complex> coefs) const;
  /// Real values -> coefficients.
  void from_phys_real(const Eigen::VectorXd& values,
                      std::span<Complex> coefs) const;

  static std::shared_ptr<const Collocation> shared(int dim_n, int trunc_k);

 private:
  int dim_n_;
  int trunc_k_;
  int pts_per_axis_;
  int pts_;
  Eigen::MatrixXcd fwd_;  // pts_per_axis x modes_per_axis, per-axis DFT
  Eigen::MatrixXcd inv_;  // modes_per_axis x pts_per_axis
};

/// Spectral partial derivative: multiply channel coefficients by 2 pi i k_axis.
void spectral_gradient(const FieldShape& shape, std::span<const Complex> coefs,
                       int axis, std::span<Complex> out);

/// Pointwise multiplication u -> phi * u through the collocation grid.
/// phi and u are single-channel coefficient spans on the same (n, K) space.
void multiply_fields(const Collocation& col, std::span<const Complex> phi,
                     std::span<const Complex> u, std::span<Complex> out);

/// Operator norm of the multiplication operator u -> phi * u from scale
/// index g1 to g2, estimated by power iteration on the truncated matrix.
double multiplication_operator_norm(const Collocation& col,
                                    std::span<const Complex> phi,
                                    SpaceIndex g1, SpaceIndex g2,
                                    double rel_tol = 1e-6, int max_iter = 400);

}  // namespace rspde
