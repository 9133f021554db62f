#include "rspde/collocation.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace rspde {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Collocation::Collocation(int dim_n, int trunc_k)
    : dim_n_(dim_n), trunc_k_(trunc_k), pts_per_axis_(3 * trunc_k + 2) {
  pts_ = 1;
  for (int a = 0; a < dim_n_; ++a) pts_ *= pts_per_axis_;
  const int mpa = 2 * trunc_k_ + 1;
  fwd_.resize(pts_per_axis_, mpa);
  for (int p = 0; p < pts_per_axis_; ++p) {
    const double x = double(p) / pts_per_axis_;
    for (int j = 0; j < mpa; ++j)
      fwd_(p, j) = std::polar(1.0, kTwoPi * (j - trunc_k_) * x);
  }
  inv_ = fwd_.adjoint() / double(pts_per_axis_);
}

std::array<double, 3> Collocation::point(int p) const {
  std::array<double, 3> x{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_n_; ++a) {
    x[a] = double(p % pts_per_axis_) / pts_per_axis_;
    p /= pts_per_axis_;
  }
  return x;
}

namespace {

// Apply a per-axis matrix along every axis of a rank-n tensor stored flat.
// in: extent_in per axis, out: extent_out per axis.
void tensor_apply(const Eigen::MatrixXcd& M, int dim_n,
                  std::span<const Complex> in, int ext_in,
                  std::span<Complex> out, int ext_out) {
  std::vector<Complex> cur(in.begin(), in.end());
  int done_ext = 1;      // axes already transformed have extent ext_out
  int todo_ext = 1;      // remaining axes have extent ext_in
  for (int a = 1; a < dim_n; ++a) todo_ext *= ext_in;
  for (int axis = 0; axis < dim_n; ++axis) {
    // layout: [outer (slower axes, extent todo_ext)] [axis ext_in] [inner done_ext]
    std::vector<Complex> next(static_cast<std::size_t>(done_ext) * ext_out *
                              todo_ext);
    for (int o = 0; o < todo_ext; ++o) {
      for (int i = 0; i < done_ext; ++i) {
        for (int r = 0; r < ext_out; ++r) {
          Complex acc = 0.0;
          const Complex* src = cur.data() + (std::size_t(o) * ext_in) * done_ext + i;
          for (int c = 0; c < ext_in; ++c)
            acc += M(r, c) * src[std::size_t(c) * done_ext];
          next[(std::size_t(o) * ext_out + r) * done_ext + i] = acc;
        }
      }
    }
    cur = std::move(next);
    done_ext *= ext_out;
    if (axis + 1 < dim_n) todo_ext /= ext_in;
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

}  // namespace

void Collocation::to_phys(std::span<const Complex> coefs,
                          std::span<Complex> values) const {
  tensor_apply(fwd_, dim_n_, coefs, 2 * trunc_k_ + 1, values, pts_per_axis_);
}

void Collocation::to_coef(std::span<const Complex> values,
                          std::span<Complex> coefs) const {
  tensor_apply(inv_, dim_n_, values, pts_per_axis_, coefs, 2 * trunc_k_ + 1);
}

Eigen::VectorXd Collocation::to_phys_real(std::span<const Complex> coefs) const {
  std::vector<Complex> vals(pts_);
  to_phys(coefs, vals);
  Eigen::VectorXd out(pts_);
  for (int p = 0; p < pts_; ++p) out[p] = vals[p].real();
  return out;
}

void Collocation::from_phys_real(const Eigen::VectorXd& values,
                                 std::span<Complex> coefs) const {
  std::vector<Complex> vals(pts_);
  for (int p = 0; p < pts_; ++p) vals[p] = values[p];
  to_coef(vals, coefs);
}

std::shared_ptr<const Collocation> Collocation::shared(int dim_n, int trunc_k) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const Collocation>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{dim_n, trunc_k}];
  if (!slot) slot = std::make_shared<Collocation>(dim_n, trunc_k);
  return slot;
}

void spectral_gradient(const FieldShape& shape, std::span<const Complex> coefs,
                       int axis, std::span<Complex> out) {
  const int m = shape.modes();
  for (int i = 0; i < m; ++i) {
    auto k = mode_wavevector(shape, i);
    out[i] = Complex(0.0, kTwoPi * k[axis]) * coefs[i];
  }
}

void multiply_fields(const Collocation& col, std::span<const Complex> phi,
                     std::span<const Complex> u, std::span<Complex> out) {
  std::vector<Complex> pv(col.points()), uv(col.points());
  col.to_phys(phi, pv);
  col.to_phys(u, uv);
  for (int p = 0; p < col.points(); ++p) pv[p] *= uv[p];
  col.to_coef(pv, out);
}

double multiplication_operator_norm(const Collocation& col,
                                    std::span<const Complex> phi,
                                    SpaceIndex g1, SpaceIndex g2,
                                    double rel_tol, int max_iter) {
  const int n = col.dim_n(), K = col.trunc_k();
  FieldShape shape{n, K, 1, true};
  const int m = shape.modes();
  const auto& w1 = bessel_weights_pow(n, K, 2.0 * g1);
  const auto& w2 = bessel_weights_pow(n, K, 2.0 * g2);
  // power iteration on A^H A with A = W2 * Mult(phi) * W1^{-1}, acting on
  // the weighted coefficient vector so both norms are plain l2
  std::vector<Complex> v(m), av(m), tmp(m);
  for (int i = 0; i < m; ++i)
    v[i] = Complex(std::cos(0.7 * i + 0.3), std::sin(1.3 * i));
  auto normalize = [&](std::vector<Complex>& x) {
    double s = 0.0;
    for (auto& c : x) s += std::norm(c);
    s = std::sqrt(s);
    if (s > 0.0)
      for (auto& c : x) c /= s;
    return s;
  };
  normalize(v);
  // conjugate symbol coef(k) = conj(phi(-k)): multiplication by it is the
  // L2 adjoint of multiplication by phi
  std::vector<Complex> phic(m);
  {
    const int mpa = 2 * K + 1;
    for (int i = 0; i < m; ++i) {
      int rest = i, negidx = 0, stride = 1;
      for (int a = 0; a < n; ++a) {
        negidx += (mpa - 1 - rest % mpa) * stride;
        rest /= mpa;
        stride *= mpa;
      }
      phic[i] = std::conj(phi[negidx]);
    }
  }
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    // A v with A = W2^{1/2} Mult(phi) W1^{-1/2}
    for (int i = 0; i < m; ++i) tmp[i] = v[i] / std::sqrt(w1[i]);
    multiply_fields(col, phi, tmp, av);
    for (int i = 0; i < m; ++i) av[i] *= std::sqrt(w2[i]);
    // A^H (A v)
    for (int i = 0; i < m; ++i) av[i] *= std::sqrt(w2[i]);
    multiply_fields(col, phic, av, tmp);
    for (int i = 0; i < m; ++i) tmp[i] /= std::sqrt(w1[i]);
    const double nl = std::sqrt(normalize(tmp));
    v.swap(tmp);
    if (it > 2 && std::abs(nl - lambda) <= rel_tol * std::max(nl, 1e-300)) {
      lambda = nl;
      break;
    }
    lambda = nl;
  }
  return lambda;
}

}  // namespace rspde
