#include "rspde/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rspde/parallel.hpp"

namespace rspde {

int& global_thread_count() {
  static int n = 1;
  return n;
}

FieldEnsemble::FieldEnsemble(const FieldShape& shape,
                             std::shared_ptr<const TimeGrid> grid,
                             int num_samples)
    : shape_(shape), grid_(std::move(grid)), num_samples_(num_samples) {
  data_.assign(std::size_t(num_samples_) * grid_->num_nodes() * shape_.size(),
               Complex(0.0, 0.0));
}

SpectralField FieldEnsemble::field(int sample, int node) const {
  SpectralField f(shape_);
  auto src = span(sample, node);
  std::copy(src.begin(), src.end(), f.coef().data());
  return f;
}

void FieldEnsemble::set_field(int sample, int node, const SpectralField& f) {
  if (!f.shape().same_space(shape_))
    throw std::domain_error("FieldEnsemble::set_field: shape mismatch");
  auto dst = span(sample, node);
  std::copy(f.coef().data(), f.coef().data() + f.coef().size(), dst.begin());
}

FieldEnsemble& FieldEnsemble::operator+=(const FieldEnsemble& o) {
  if (data_.size() != o.data_.size())
    throw std::domain_error("FieldEnsemble: size mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

FieldEnsemble& FieldEnsemble::operator-=(const FieldEnsemble& o) {
  if (data_.size() != o.data_.size())
    throw std::domain_error("FieldEnsemble: size mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

FieldEnsemble& FieldEnsemble::operator*=(double c) {
  for (auto& v : data_) v *= c;
  return *this;
}

BrownianDriver sample_brownian(std::uint64_t seed,
                               std::shared_ptr<const TimeGrid> grid, int dim_d,
                               int num_samples) {
  if (num_samples < 1) throw std::domain_error("sample_brownian: M >= 1");
  BrownianDriver drv;
  drv.grid = grid;
  drv.dim_d = dim_d;
  drv.num_samples = num_samples;
  drv.master_seed = seed;
  const int steps = grid->num_steps();
  drv.increments.resize(std::size_t(num_samples) * steps * dim_d);
  parallel_for(num_samples, [&](int s) {
    Rng rng(derive_seed(seed, kStreamBrownianDriver, s));
    for (int i = 0; i < steps; ++i) {
      const double sd = std::sqrt(grid->dt(i));
      double* out = drv.incr(s, i);
      for (int c = 0; c < dim_d; ++c) out[c] = sd * rng.next_gaussian();
    }
  });
  return drv;
}

// ---- two-parameter helpers --------------------------------------------------

namespace {

class ZeroTwoParam final : public TwoParamField {
 public:
  explicit ZeroTwoParam(FieldShape shape) : shape_(shape) {}
  FieldShape field_shape() const override { return shape_; }
  void eval_row(int, int, std::span<const int> ts, Complex* out) const override {
    std::fill(out, out + ts.size() * shape_.size(), Complex(0.0, 0.0));
  }

 private:
  FieldShape shape_;
};

class LinearCombTwoParam final : public TwoParamField {
 public:
  explicit LinearCombTwoParam(
      std::vector<std::pair<double, std::shared_ptr<const TwoParamField>>> terms)
      : terms_(std::move(terms)) {
    if (terms_.empty())
      throw std::domain_error("linear_comb_two_param: empty term list");
    for (const auto& t : terms_)
      if (!t.second->field_shape().same_space(terms_[0].second->field_shape()))
        throw std::domain_error("linear_comb_two_param: shape mismatch");
  }
  FieldShape field_shape() const override {
    return terms_[0].second->field_shape();
  }
  void eval_row(int sample, int s, std::span<const int> ts,
                Complex* out) const override {
    const std::size_t n = ts.size() * field_shape().size();
    std::vector<Complex> buf(n);
    std::fill(out, out + n, Complex(0.0, 0.0));
    for (const auto& [c, term] : terms_) {
      term->eval_row(sample, s, ts, buf.data());
      for (std::size_t i = 0; i < n; ++i) out[i] += c * buf[i];
    }
  }

 private:
  std::vector<std::pair<double, std::shared_ptr<const TwoParamField>>> terms_;
};

}  // namespace

std::shared_ptr<const TwoParamField> zero_two_param(FieldShape shape) {
  return std::make_shared<ZeroTwoParam>(shape);
}

std::shared_ptr<const TwoParamField> linear_comb_two_param(
    std::vector<std::pair<double, std::shared_ptr<const TwoParamField>>> terms) {
  return std::make_shared<LinearCombTwoParam>(std::move(terms));
}

void MartingaleTaggedIncrement::eval_drift_row(int sample, int s,
                                               std::span<const int> ts,
                                               Complex* out) const {
  total->eval_row(sample, s, ts, out);
  if (!martingale) return;
  const std::size_t n = ts.size() * field_shape().size();
  std::vector<Complex> buf(n);
  martingale->eval_row(sample, s, ts, buf.data());
  for (std::size_t i = 0; i < n; ++i) out[i] -= buf[i];
}

MartingaleTaggedIncrement MartingaleTaggedIncrement::linear_comb(
    std::span<const std::pair<double, const MartingaleTaggedIncrement*>> terms) {
  std::vector<std::pair<double, std::shared_ptr<const TwoParamField>>> tot, mart;
  for (const auto& [c, inc] : terms) {
    tot.emplace_back(c, inc->total);
    if (inc->martingale) mart.emplace_back(c, inc->martingale);
  }
  MartingaleTaggedIncrement out;
  out.total = linear_comb_two_param(std::move(tot));
  out.martingale = mart.empty() ? nullptr : linear_comb_two_param(std::move(mart));
  return out;
}

// ---- estimators --------------------------------------------------------------

namespace {

// (mean of acc/M)^{1/m} for finite m; acc already holds max for m = infinity.
double reduce_lm(double acc, int m, int num_samples) {
  if (m == kInfinityM) return acc;
  return std::pow(acc / num_samples, 1.0 / m);
}

void check_m(int m) {
  if (m != kInfinityM && m < 2)
    throw std::domain_error("integrability index m must be >= 2 (or infinity)");
}

struct RowSet {
  std::vector<int> starts;              // distinct s, ascending
  std::vector<std::vector<int>> ts;     // targets per start, ascending
};

RowSet rows_of_policy(const IndexWindow& w) {
  RowSet rs;
  auto pairs = pair_policy(w);
  for (const auto& [i, j] : pairs) {
    if (rs.starts.empty() || rs.starts.back() != i) {
      rs.starts.push_back(i);
      rs.ts.emplace_back();
    }
    rs.ts.back().push_back(j);
  }
  return rs;
}

const char* policy_name(const IndexWindow& w) {
  return w.count() <= 1025 ? "exhaustive" : "strided";
}

}  // namespace

double lm_sup_norm(const FieldEnsemble& e, int m, SpaceIndex gamma,
                   const IndexWindow& w) {
  check_m(m);
  const auto& shape = e.shape();
  const auto& w2g = bessel_weights_pow(shape.dim_n, shape.trunc_k, 2.0 * gamma);
  const int nodes = w.count();
  std::vector<double> acc(nodes, 0.0);
  for (int s = 0; s < e.num_samples(); ++s)
    for (int i = 0; i < nodes; ++i) {
      const double nrm = std::sqrt(
          sobolev_norm_sq(e.span(s, w.begin + i), shape.channels, w2g));
      if (m == kInfinityM)
        acc[i] = std::max(acc[i], nrm);
      else
        acc[i] += std::pow(nrm, m);
    }
  double out = 0.0;
  for (int i = 0; i < nodes; ++i)
    out = std::max(out, reduce_lm(acc[i], m, e.num_samples()));
  return out;
}

double lm_sup_norm(const FieldEnsemble& e, int m, SpaceIndex gamma) {
  return lm_sup_norm(e, m, gamma, IndexWindow::whole(e.grid()));
}

double lm_holder_seminorm(const FieldEnsemble& e, int m, SpaceIndex gamma,
                          double beta, bool mild, const PropagatorGridCache* prop,
                          const IndexWindow& w) {
  check_m(m);
  if (mild && prop == nullptr)
    throw std::domain_error("lm_holder_seminorm: mild variant needs a propagator");
  const auto& shape = e.shape();
  const auto& w2g = bessel_weights_pow(shape.dim_n, shape.trunc_k, 2.0 * gamma);
  const int fsize = shape.size();
  const auto rs = rows_of_policy(w);
  std::vector<double> row_max(rs.starts.size(), 0.0);

  parallel_for(static_cast<int>(rs.starts.size()), [&](int r) {
    const int s_idx = rs.starts[r];
    const auto& ts = rs.ts[r];
    std::vector<double> acc(ts.size(), 0.0);
    std::vector<Complex> state(fsize);
    for (int smp = 0; smp < e.num_samples(); ++smp) {
      if (!mild) {
        const Complex* ys = e.at(smp, s_idx);
        for (std::size_t k = 0; k < ts.size(); ++k) {
          const Complex* yt = e.at(smp, ts[k]);
          double nsq = 0.0;
          for (int c = 0; c < shape.channels; ++c)
            for (int mo = 0; mo < shape.modes(); ++mo) {
              const int idx = c * shape.modes() + mo;
              nsq += w2g[mo] * std::norm(yt[idx] - ys[idx]);
            }
          const double nrm = std::sqrt(nsq);
          if (m == kInfinityM)
            acc[k] = std::max(acc[k], nrm);
          else
            acc[k] += std::pow(nrm, m);
        }
      } else {
        auto src = e.span(smp, s_idx);
        std::copy(src.begin(), src.end(), state.begin());
        int cur = s_idx;
        for (std::size_t k = 0; k < ts.size(); ++k) {
          prop->apply_range(cur, ts[k], state.data(), shape.channels);
          cur = ts[k];
          const Complex* yt = e.at(smp, ts[k]);
          double nsq = 0.0;
          for (int c = 0; c < shape.channels; ++c)
            for (int mo = 0; mo < shape.modes(); ++mo) {
              const int idx = c * shape.modes() + mo;
              nsq += w2g[mo] * std::norm(yt[idx] - state[idx]);
            }
          const double nrm = std::sqrt(nsq);
          if (m == kInfinityM)
            acc[k] = std::max(acc[k], nrm);
          else
            acc[k] += std::pow(nrm, m);
        }
      }
    }
    double mx = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double tau = e.grid().t(ts[k]) - e.grid().t(s_idx);
      mx = std::max(mx, reduce_lm(acc[k], m, e.num_samples()) /
                            std::pow(tau, beta));
    }
    row_max[r] = mx;
  });

  double out = 0.0;
  for (double v : row_max) out = std::max(out, v);
  return out;
}

double lm_holder_seminorm(const FieldEnsemble& e, int m, SpaceIndex gamma,
                          double beta, bool mild,
                          const PropagatorGridCache* prop) {
  return lm_holder_seminorm(e, m, gamma, beta, mild, prop,
                            IndexWindow::whole(e.grid()));
}

NormReport norm_report(const FieldEnsemble& e, int m, SpaceIndex gamma,
                       double beta, const PropagatorGridCache* prop) {
  NormReport rep;
  const IndexWindow w = IndexWindow::whole(e.grid());
  rep.sup_norm = lm_sup_norm(e, m, gamma, w);
  rep.holder_seminorm = lm_holder_seminorm(e, m, gamma, beta, false, nullptr, w);
  if (prop != nullptr)
    rep.mild_holder_seminorm =
        lm_holder_seminorm(e, m, gamma, beta, true, prop, w);
  rep.meta = {m, gamma, beta, policy_name(w)};
  return rep;
}

namespace {

// Common pair-policy sup for any row evaluator writing field rows.
template <typename RowEval>
double pair_sup_norm(const FieldShape& shape, const TimeGrid& grid,
                     int num_samples, int m, SpaceIndex gamma, double exponent,
                     const IndexWindow& w, RowEval&& eval) {
  check_m(m);
  const auto& w2g = bessel_weights_pow(shape.dim_n, shape.trunc_k, 2.0 * gamma);
  const int fsize = shape.size();
  const auto rs = rows_of_policy(w);
  std::vector<double> row_max(rs.starts.size(), 0.0);
  parallel_for(static_cast<int>(rs.starts.size()), [&](int r) {
    const int s_idx = rs.starts[r];
    const auto& ts = rs.ts[r];
    std::vector<Complex> buf(ts.size() * fsize);
    std::vector<double> acc(ts.size(), 0.0);
    for (int smp = 0; smp < num_samples; ++smp) {
      eval(smp, s_idx, std::span<const int>(ts.data(), ts.size()), buf.data());
      for (std::size_t k = 0; k < ts.size(); ++k) {
        const double nrm = std::sqrt(sobolev_norm_sq(
            {buf.data() + k * fsize, static_cast<std::size_t>(fsize)},
            shape.channels, w2g));
        if (m == kInfinityM)
          acc[k] = std::max(acc[k], nrm);
        else
          acc[k] += std::pow(nrm, m);
      }
    }
    double mx = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double tau = grid.t(ts[k]) - grid.t(s_idx);
      mx = std::max(mx, reduce_lm(acc[k], m, num_samples) /
                            std::pow(tau, exponent));
    }
    row_max[r] = mx;
  });
  double out = 0.0;
  for (double v : row_max) out = std::max(out, v);
  return out;
}

}  // namespace

double two_param_seminorm(const TwoParamField& a, const TimeGrid& grid,
                          int num_samples, int m, SpaceIndex gamma,
                          double exponent, const IndexWindow& w) {
  return pair_sup_norm(a.field_shape(), grid, num_samples, m, gamma, exponent, w,
                       [&](int smp, int s, std::span<const int> ts,
                           Complex* out) { a.eval_row(smp, s, ts, out); });
}

double conditional_remainder_norm(const MartingaleTaggedIncrement& r,
                                  const TimeGrid& grid, int num_samples, int m,
                                  SpaceIndex gamma, double exponent,
                                  const IndexWindow& w) {
  return pair_sup_norm(r.field_shape(), grid, num_samples, m, gamma, exponent, w,
                       [&](int smp, int s, std::span<const int> ts, Complex* out) {
                         r.eval_drift_row(smp, s, ts, out);
                       });
}

double conditional_remainder_norm(const MartingaleTaggedIncrement& r,
                                  const TimeGrid& grid, int num_samples, int m,
                                  SpaceIndex gamma, double exponent) {
  return conditional_remainder_norm(r, grid, num_samples, m, gamma, exponent,
                                    IndexWindow{0, grid.num_nodes() - 1});
}

double total_remainder_norm(const MartingaleTaggedIncrement& r,
                            const TimeGrid& grid, int num_samples, int m,
                            SpaceIndex gamma, double exponent,
                            const IndexWindow& w) {
  return pair_sup_norm(r.field_shape(), grid, num_samples, m, gamma, exponent, w,
                       [&](int smp, int s, std::span<const int> ts, Complex* out) {
                         r.eval_total_row(smp, s, ts, out);
                       });
}

}  // namespace rspde
