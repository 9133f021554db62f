#include "rspde/spectral.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace rspde {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kFourPiSq = 39.478417604357434475337963999505;
}  // namespace

std::array<int, 3> mode_wavevector(const FieldShape& shape, int flat_mode) {
  std::array<int, 3> k{0, 0, 0};
  const int mpa = shape.modes_per_axis();
  for (int i = 0; i < shape.dim_n; ++i) {
    k[i] = flat_mode % mpa - shape.trunc_k;
    flat_mode /= mpa;
  }
  return k;
}

int flat_mode_index(const FieldShape& shape, std::span<const int> k) {
  const int mpa = shape.modes_per_axis();
  int idx = 0;
  int stride = 1;
  for (int i = 0; i < shape.dim_n; ++i) {
    if (k[i] < -shape.trunc_k || k[i] > shape.trunc_k)
      throw std::domain_error("flat_mode_index: wavevector outside truncation");
    idx += (k[i] + shape.trunc_k) * stride;
    stride *= mpa;
  }
  return idx;
}

namespace {

struct ModeTables {
  std::vector<double> bessel;   // 1 + |2 pi k|^2
  std::vector<double> laplace;  // |2 pi k|^2
};

const ModeTables& mode_tables(int n, int K) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<ModeTables>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{n, K}];
  if (!slot) {
    FieldShape shape{n, K, 1, true};
    auto t = std::make_unique<ModeTables>();
    const int m = shape.modes();
    t->bessel.resize(m);
    t->laplace.resize(m);
    for (int i = 0; i < m; ++i) {
      auto k = mode_wavevector(shape, i);
      double k2 = 0.0;
      for (int a = 0; a < n; ++a) k2 += double(k[a]) * k[a];
      t->laplace[i] = kFourPiSq * k2;
      t->bessel[i] = 1.0 + kFourPiSq * k2;
    }
    slot = std::move(t);
  }
  return *slot;
}

}  // namespace

const std::vector<double>& bessel_weights(int n, int K) {
  return mode_tables(n, K).bessel;
}

const std::vector<double>& laplace_symbols(int n, int K) {
  return mode_tables(n, K).laplace;
}

const std::vector<double>& bessel_weights_pow(int n, int K, double expo) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, double>, std::unique_ptr<std::vector<double>>>
      cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{n, K, expo}];
  if (!slot) {
    const auto& base = bessel_weights(n, K);
    auto v = std::make_unique<std::vector<double>>(base.size());
    if (expo == 0.0) {
      std::fill(v->begin(), v->end(), 1.0);
    } else if (expo == 1.0) {
      *v = base;
    } else {
      for (std::size_t i = 0; i < base.size(); ++i)
        (*v)[i] = std::pow(base[i], expo);
    }
    slot = std::move(v);
  }
  return *slot;
}

double sobolev_norm_sq(std::span<const Complex> coefs, int channels,
                       std::span<const double> w2g) {
  const std::size_t modes = w2g.size();
  double s = 0.0;
  for (int c = 0; c < channels; ++c) {
    const Complex* p = coefs.data() + c * modes;
    for (std::size_t i = 0; i < modes; ++i)
      s += w2g[i] * std::norm(p[i]);
  }
  return s;
}

double sobolev_norm(const SpectralField& u, SpaceIndex gamma) {
  const auto& shape = u.shape();
  const auto& w = bessel_weights_pow(shape.dim_n, shape.trunc_k, 2.0 * gamma);
  return std::sqrt(sobolev_norm_sq(
      {u.coef().data(), static_cast<std::size_t>(u.coef().size())},
      shape.channels, w));
}

double interpolation_defect(const SpectralField& u, SpaceIndex g1,
                            SpaceIndex g2, SpaceIndex g3) {
  if (!(g1 <= g2 && g2 <= g3))
    throw std::domain_error("interpolation_defect: need g1 <= g2 <= g3");
  const double n1 = sobolev_norm(u, g1);
  if (n1 == 0.0) throw std::domain_error("interpolation_defect: zero field");
  if (g3 == g1) return 1.0;
  const double n2 = sobolev_norm(u, g2);
  const double n3 = sobolev_norm(u, g3);
  // evaluated in log space: the three norms can span many decades
  const double lg = (g3 - g1) * std::log(n2) - (g3 - g2) * std::log(n1) -
                    (g2 - g1) * std::log(n3);
  return std::exp(lg);
}

double hermitian_defect(const SpectralField& u) {
  const auto& shape = u.shape();
  const int m = shape.modes();
  const int mpa = shape.modes_per_axis();
  double defect = 0.0;
  for (int c = 0; c < shape.channels; ++c) {
    auto span = u.channel_span(c);
    for (int i = 0; i < m; ++i) {
      // flat index of -k: each axis digit d -> (mpa - 1) - d
      int rest = i, neg = 0, stride = 1;
      for (int a = 0; a < shape.dim_n; ++a) {
        neg += (mpa - 1 - rest % mpa) * stride;
        rest /= mpa;
        stride *= mpa;
      }
      defect = std::max(defect, std::abs(span[neg] - std::conj(span[i])));
    }
  }
  return defect;
}

double dirichlet_energy(const SpectralField& u) {
  const auto& shape = u.shape();
  const auto& lap = laplace_symbols(shape.dim_n, shape.trunc_k);
  double s = 0.0;
  for (int c = 0; c < shape.channels; ++c) {
    auto span = u.channel_span(c);
    for (int i = 0; i < shape.modes(); ++i) s += lap[i] * std::norm(span[i]);
  }
  return s;
}

SpectralField single_mode_field(const FieldShape& shape, int channel,
                                std::span<const int> k, Complex value,
                                bool symmetrize) {
  SpectralField u(shape);
  u.at(channel, flat_mode_index(shape, k)) = value;
  if (symmetrize) {
    std::array<int, 3> neg{0, 0, 0};
    for (int i = 0; i < shape.dim_n; ++i) neg[i] = -k[i];
    u.at(channel, flat_mode_index(shape, {neg.data(),
                                          static_cast<std::size_t>(shape.dim_n)})) +=
        std::conj(value);
  }
  return u;
}

// ---- generators ----------------------------------------------------------

GeneratorFamily GeneratorFamily::heat() {
  GeneratorFamily g;
  g.kind = Kind::ConstantMultiplier;
  g.multiplier = [](std::span<const int> k) {
    double k2 = 0.0;
    for (int v : k) k2 += double(v) * v;
    return -kFourPiSq * k2;
  };
  return g;
}

GeneratorFamily GeneratorFamily::bessel_heat() {
  GeneratorFamily g;
  g.kind = Kind::ConstantMultiplier;
  g.multiplier = [](std::span<const int> k) {
    double k2 = 0.0;
    for (int v : k) k2 += double(v) * v;
    return -(1.0 + kFourPiSq * k2);
  };
  return g;
}

GeneratorFamily GeneratorFamily::constant(
    std::function<double(std::span<const int>)> m) {
  GeneratorFamily g;
  g.kind = Kind::ConstantMultiplier;
  g.multiplier = std::move(m);
  return g;
}

GeneratorFamily GeneratorFamily::divergence_form(
    std::function<Eigen::MatrixXd(double, std::span<const double>)> a,
    double ellipticity_K) {
  GeneratorFamily g;
  g.kind = Kind::DivergenceForm;
  g.a_coeff = std::move(a);
  g.ellipticity_K = ellipticity_K;
  return g;
}

double GeneratorFamily::ellipticity_margin(int dim_n, double horizon_T,
                                           int samples) const {
  if (kind != Kind::DivergenceForm)
    throw std::domain_error("ellipticity_margin: divergence-form only");
  double margin = std::numeric_limits<double>::infinity();
  std::vector<double> x(dim_n);
  Eigen::VectorXd v(dim_n);
  const int nt = 8;
  for (int it = 0; it <= nt; ++it) {
    const double t = horizon_T * it / nt;
    for (int s = 0; s < samples; ++s) {
      // low-discrepancy lattice over (x, v)
      for (int a = 0; a < dim_n; ++a)
        x[a] = std::fmod(0.5 + (s + 1) * 0.7548776662466927 * (a + 1), 1.0);
      for (int a = 0; a < dim_n; ++a)
        v[a] = std::cos(kTwoPi * (s * 0.3183 + 0.17 * a + 0.05 * it));
      const double vn2 = v.squaredNorm();
      if (vn2 < 1e-12) continue;
      Eigen::MatrixXd A = a_coeff(t, {x.data(), x.size()});
      margin = std::min(margin, (v.dot(A * v) - ellipticity_K * vn2) / vn2);
    }
  }
  return margin;
}

// ---- propagators ----------------------------------------------------------

Propagator::Propagator(GeneratorFamily gen, int dim_n, int trunc_k,
                       double substep)
    : gen_(std::move(gen)), dim_n_(dim_n), trunc_k_(trunc_k), substep_(substep) {
  if (substep_ <= 0.0) throw std::domain_error("Propagator: substep must be > 0");
  if (diagonal()) {
    FieldShape shape{dim_n_, trunc_k_, 1, true};
    const int m = shape.modes();
    mult_table_.resize(m);
    for (int i = 0; i < m; ++i) {
      auto k = mode_wavevector(shape, i);
      const double v =
          gen_.multiplier({k.data(), static_cast<std::size_t>(dim_n_)});
      if (v > 0.0)
        throw std::domain_error("Propagator: constant multiplier must be <= 0");
      mult_table_[i] = v;
    }
  } else if (gen_.ellipticity_K <= 0.0) {
    throw std::domain_error("Propagator: divergence form needs ellipticity_K > 0");
  }
}

Propagator Propagator::identity(int dim_n, int trunc_k) {
  return Propagator(GeneratorFamily::constant([](std::span<const int>) {
    return 0.0;
  }), dim_n, trunc_k);
}

const std::vector<double>& Propagator::multiplier_table() const {
  if (!diagonal())
    throw std::domain_error("multiplier_table: diagonal propagators only");
  return mult_table_;
}

Eigen::MatrixXcd Propagator::galerkin_matrix(double t) const {
  if (diagonal())
    throw std::domain_error("galerkin_matrix: divergence-form only");
  FieldShape shape{dim_n_, trunc_k_, 1, true};
  const int m = shape.modes();
  // Fourier coefficients of a(t, .) up to |2K| per axis, sampled on a grid
  // fine enough for an exact transform of the needed band.
  const int P = 4 * trunc_k_ + 2;
  const int band = 4 * trunc_k_ + 1;  // offsets -2K .. 2K per axis
  int bmodes = 1;
  for (int a = 0; a < dim_n_; ++a) bmodes *= band;

  std::vector<Eigen::MatrixXcd> ahat(
      bmodes, Eigen::MatrixXcd::Zero(dim_n_, dim_n_));
  int pts = 1;
  for (int a = 0; a < dim_n_; ++a) pts *= P;
  std::vector<double> x(dim_n_);
  for (int p = 0; p < pts; ++p) {
    int rest = p;
    for (int a = 0; a < dim_n_; ++a) {
      x[a] = double(rest % P) / P;
      rest /= P;
    }
    Eigen::MatrixXd A = gen_.a_coeff(t, {x.data(), x.size()});
    for (int b = 0; b < bmodes; ++b) {
      int br = b;
      double phase = 0.0;
      for (int a = 0; a < dim_n_; ++a) {
        const int off = br % band - 2 * trunc_k_;
        br /= band;
        phase -= kTwoPi * off * x[a];
      }
      ahat[b] += std::polar(1.0, phase) * A;
    }
  }
  for (auto& mcoef : ahat) mcoef /= double(pts);

  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(m, m);
  for (int row = 0; row < m; ++row) {
    auto kr = mode_wavevector(shape, row);
    for (int col = 0; col < m; ++col) {
      auto kc = mode_wavevector(shape, col);
      int b = 0, stride = 1;
      for (int a = 0; a < dim_n_; ++a) {
        b += (kr[a] - kc[a] + 2 * trunc_k_) * stride;
        stride *= band;
      }
      Complex s = 0.0;
      const Eigen::MatrixXcd& Ab = ahat[b];
      for (int p = 0; p < dim_n_; ++p)
        for (int q = 0; q < dim_n_; ++q)
          s += double(kr[p]) * Ab(p, q) * double(kc[q]);
      M(row, col) = -kFourPiSq * s;
    }
  }
  return M;
}

void Propagator::apply(double s, double t, std::complex<double>* coefs,
                       int channels) const {
  if (s > t) throw std::domain_error("Propagator::apply: need s <= t");
  if (s == t) return;
  FieldShape shape{dim_n_, trunc_k_, 1, true};
  const int m = shape.modes();
  if (diagonal()) {
    const double tau = t - s;
    for (int c = 0; c < channels; ++c) {
      Complex* p = coefs + c * m;
      for (int i = 0; i < m; ++i) p[i] *= std::exp(mult_table_[i] * tau);
    }
    return;
  }
  const int nsub = std::max<int>(1, static_cast<int>(std::ceil((t - s) / substep_)));
  const double dt = (t - s) / nsub;
  for (int j = 0; j < nsub; ++j) {
    const double tm = s + (j + 0.5) * dt;
    Eigen::MatrixXcd E = (dt * galerkin_matrix(tm)).exp();
    for (int c = 0; c < channels; ++c) {
      Eigen::Map<Eigen::VectorXcd> v(coefs + c * m, m);
      v = E * v;
    }
  }
}

SpectralField Propagator::apply(double s, double t, const SpectralField& u) const {
  SpectralField out = u;
  apply(s, t, out.coef().data(), u.shape().channels);
  return out;
}

PropagatorGridCache::PropagatorGridCache(std::shared_ptr<const Propagator> prop,
                                         const TimeGrid& grid)
    : prop_(std::move(prop)), grid_(grid) {
  if (!prop_->diagonal()) {
    const int steps = grid_.num_steps();
    step_mats_.resize(steps);
    FieldShape shape{prop_->dim_n(), prop_->trunc_k(), 1, true};
    const int m = shape.modes();
    for (int i = 0; i < steps; ++i) {
      const double s = grid_.t(i), t = grid_.t(i + 1);
      const int nsub =
          std::max<int>(1, static_cast<int>(std::ceil((t - s) / prop_->substep())));
      const double dt = (t - s) / nsub;
      Eigen::MatrixXcd E = Eigen::MatrixXcd::Identity(m, m);
      for (int j = 0; j < nsub; ++j) {
        const double tm = s + (j + 0.5) * dt;
        E = (dt * prop_->galerkin_matrix(tm)).exp() * E;
      }
      step_mats_[i] = std::move(E);
    }
  }
}

void PropagatorGridCache::apply_step(int i, std::complex<double>* coefs,
                                     int channels) const {
  if (prop_->diagonal()) {
    const auto& mult = prop_->multiplier_table();
    const int m = static_cast<int>(mult.size());
    const double tau = grid_.dt(i);
    for (int c = 0; c < channels; ++c) {
      Complex* p = coefs + c * m;
      for (int k = 0; k < m; ++k) p[k] *= std::exp(mult[k] * tau);
    }
    return;
  }
  const auto& E = step_mats_[i];
  const int m = static_cast<int>(E.rows());
  for (int c = 0; c < channels; ++c) {
    Eigen::Map<Eigen::VectorXcd> v(coefs + c * m, m);
    v = E * v;
  }
}

void PropagatorGridCache::apply_range(int i, int j, std::complex<double>* coefs,
                                      int channels) const {
  if (j < i) throw std::domain_error("apply_range: need i <= j");
  if (prop_->diagonal()) {
    const auto& mult = prop_->multiplier_table();
    const int m = static_cast<int>(mult.size());
    const double tau = grid_.t(j) - grid_.t(i);
    if (tau == 0.0) return;
    for (int c = 0; c < channels; ++c) {
      Complex* p = coefs + c * m;
      for (int k = 0; k < m; ++k) p[k] *= std::exp(mult[k] * tau);
    }
    return;
  }
  for (int s = i; s < j; ++s) apply_step(s, coefs, channels);
}

void PropagatorGridCache::apply_range(int i, int j, SpectralField& u) const {
  apply_range(i, j, u.coef().data(), u.shape().channels);
}

SmoothingReport smoothing_ratio(const Propagator& p, SpaceIndex g1,
                                SpaceIndex g2,
                                std::span<const std::pair<double, double>> pairs,
                                std::span<const SpectralField> probes) {
  if (!(g1 <= g2 && g2 <= g1 + 1.0))
    throw std::domain_error("smoothing_ratio: need g1 <= g2 <= g1 + 1");
  if (pairs.empty() || probes.empty())
    throw std::domain_error("smoothing_ratio: empty probe or pair set");
  SmoothingReport rep;
  for (const auto& [s, t] : pairs) {
    if (!(s < t)) throw std::domain_error("smoothing_ratio: pairs need s < t");
    const double tau = t - s;
    for (const auto& u : probes) {
      const double n1 = sobolev_norm(u, g1);
      const double n2 = sobolev_norm(u, g2);
      SpectralField su = p.apply(s, t, u);
      if (n1 > 0.0)
        rep.forward_ratio =
            std::max(rep.forward_ratio,
                     sobolev_norm(su, g2) * std::pow(tau, g2 - g1) / n1);
      if (n2 > 0.0)
        rep.difference_ratio =
            std::max(rep.difference_ratio,
                     sobolev_norm(su - u, g1) / (std::pow(tau, g2 - g1) * n2));
    }
  }
  return rep;
}

}  // namespace rspde
