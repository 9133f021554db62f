#pragma once

#include <functional>
#include <memory>
#include <string>

#include "rspde/grid.hpp"
#include "rspde/rng.hpp"
#include "rspde/spectral.hpp"

namespace rspde {

/// Integrability index for the Omega direction. Finite values take the
/// empirical m-th moment over the ensemble; kInfinityM takes the per-sample
/// sup (the finite-sample proxy for essential suprema, and labeled as such
/// wherever it is reported).
inline constexpr int kInfinityM = 0;

/// Monte Carlo ensemble of spectral fields over a shared grid, stored flat in
/// (sample, node, channel, frequency) order (the archive layout).
class FieldEnsemble {
 public:
  FieldEnsemble() = default;
  FieldEnsemble(const FieldShape& shape, std::shared_ptr<const TimeGrid> grid,
                int num_samples);

  const FieldShape& shape() const { return shape_; }
  const TimeGrid& grid() const { return *grid_; }
  std::shared_ptr<const TimeGrid> grid_ptr() const { return grid_; }
  int num_samples() const { return num_samples_; }
  int num_nodes() const { return grid_ ? grid_->num_nodes() : 0; }

  Complex* at(int sample, int node) {
    return data_.data() + (std::size_t(sample) * num_nodes() + node) * shape_.size();
  }
  const Complex* at(int sample, int node) const {
    return data_.data() + (std::size_t(sample) * num_nodes() + node) * shape_.size();
  }
  std::span<Complex> span(int sample, int node) {
    return {at(sample, node), static_cast<std::size_t>(shape_.size())};
  }
  std::span<const Complex> span(int sample, int node) const {
    return {at(sample, node), static_cast<std::size_t>(shape_.size())};
  }
  SpectralField field(int sample, int node) const;
  void set_field(int sample, int node, const SpectralField& f);

  std::vector<Complex>& raw() { return data_; }
  const std::vector<Complex>& raw() const { return data_; }

  FieldEnsemble& operator+=(const FieldEnsemble& o);
  FieldEnsemble& operator-=(const FieldEnsemble& o);
  FieldEnsemble& operator*=(double c);

  bool adapted = false;           // values at node i don't look ahead
  std::uint64_t master_seed = 0;  // provenance for reproducibility reports

 private:
  FieldShape shape_;
  std::shared_ptr<const TimeGrid> grid_;
  int num_samples_ = 0;
  std::vector<Complex> data_;
};

/// Brownian driver: per-sample independent Gaussian increments on the grid
/// steps, components stored (sample, step, component).
struct BrownianDriver {
  std::shared_ptr<const TimeGrid> grid;
  int dim_d = 1;
  int num_samples = 1;
  std::uint64_t master_seed = 0;
  std::vector<double> increments;

  double* incr(int sample, int step) {
    return increments.data() +
           (std::size_t(sample) * grid->num_steps() + step) * dim_d;
  }
  const double* incr(int sample, int step) const {
    return increments.data() +
           (std::size_t(sample) * grid->num_steps() + step) * dim_d;
  }
};

BrownianDriver sample_brownian(std::uint64_t seed,
                               std::shared_ptr<const TimeGrid> grid, int dim_d,
                               int num_samples);

// ---- two-parameter increment processes -------------------------------------

/// Two-parameter ensemble map (s, t, sample) -> field, evaluated row-wise:
/// all requested t for a fixed (sample, s) at once, t strictly increasing.
/// Row batching lets mild increments against matrix propagators amortize
/// their sweeps; implementations must stay pure (thread-safe const).
class TwoParamField {
 public:
  virtual ~TwoParamField() = default;
  virtual FieldShape field_shape() const = 0;
  virtual void eval_row(int sample, int s, std::span<const int> ts,
                        Complex* out) const = 0;
  void eval_one(int sample, int s, int t, Complex* out) const {
    const int idx[1] = {t};
    eval_row(sample, s, {idx, 1}, out);
  }
};

class LambdaTwoParam final : public TwoParamField {
 public:
  using PointFn = std::function<void(int sample, int s, int t, Complex* out)>;
  LambdaTwoParam(FieldShape shape, PointFn fn)
      : shape_(shape), fn_(std::move(fn)) {}
  FieldShape field_shape() const override { return shape_; }
  void eval_row(int sample, int s, std::span<const int> ts,
                Complex* out) const override {
    const int sz = shape_.size();
    for (std::size_t r = 0; r < ts.size(); ++r)
      fn_(sample, s, ts[r], out + r * sz);
  }

 private:
  FieldShape shape_;
  PointFn fn_;
};

std::shared_ptr<const TwoParamField> zero_two_param(FieldShape shape);

/// sum_i c_i * term_i, all terms on the same field shape.
std::shared_ptr<const TwoParamField> linear_comb_two_param(
    std::vector<std::pair<double, std::shared_ptr<const TwoParamField>>> terms);

/// Declared decomposition of a two-parameter increment into a part with
/// vanishing conditional expectation at s and the rest. Conditional
/// expectations are always evaluated through this tag (drift part pathwise),
/// never estimated statistically.
struct MartingaleTaggedIncrement {
  std::shared_ptr<const TwoParamField> total;
  std::shared_ptr<const TwoParamField> martingale;  // null means zero

  FieldShape field_shape() const { return total->field_shape(); }
  bool has_martingale_part() const { return martingale != nullptr; }

  void eval_total_row(int sample, int s, std::span<const int> ts,
                      Complex* out) const {
    total->eval_row(sample, s, ts, out);
  }
  void eval_drift_row(int sample, int s, std::span<const int> ts,
                      Complex* out) const;

  static MartingaleTaggedIncrement deterministic(
      std::shared_ptr<const TwoParamField> total) {
    return {std::move(total), nullptr};
  }
  static MartingaleTaggedIncrement linear_comb(
      std::span<const std::pair<double, const MartingaleTaggedIncrement*>> terms);
};

// ---- norm estimators --------------------------------------------------------

struct NormReport {
  double sup_norm = 0.0;
  double holder_seminorm = 0.0;
  double mild_holder_seminorm = 0.0;
  struct Meta {
    int m = 2;
    double gamma = 0.0;
    double beta = 0.0;
    std::string pair_policy;
  } meta;
};

/// sup over nodes of the L^m norm of |Y_t|_gamma.
double lm_sup_norm(const FieldEnsemble& e, int m, SpaceIndex gamma);
double lm_sup_norm(const FieldEnsemble& e, int m, SpaceIndex gamma,
                   const IndexWindow& w);

class PropagatorGridCache;

/// sup over policy pairs of ||dY_{s,t}||_{m,gamma} / |t-s|^beta; the mild
/// variant measures Y_t - S_{s,t} Y_s and needs the propagator.
double lm_holder_seminorm(const FieldEnsemble& e, int m, SpaceIndex gamma,
                          double beta, bool mild = false,
                          const PropagatorGridCache* prop = nullptr);
double lm_holder_seminorm(const FieldEnsemble& e, int m, SpaceIndex gamma,
                          double beta, bool mild, const PropagatorGridCache* prop,
                          const IndexWindow& w);

NormReport norm_report(const FieldEnsemble& e, int m, SpaceIndex gamma,
                       double beta, const PropagatorGridCache* prop = nullptr);

/// sup over policy pairs of the L^m norm of a two-parameter map scaled by
/// |t-s|^{-exponent}.
double two_param_seminorm(const TwoParamField& a, const TimeGrid& grid,
                          int num_samples, int m, SpaceIndex gamma,
                          double exponent, const IndexWindow& w);

/// Same, for the drift part of a tagged increment (the evaluator for E_s R).
double conditional_remainder_norm(const MartingaleTaggedIncrement& r,
                                  const TimeGrid& grid, int num_samples, int m,
                                  SpaceIndex gamma, double exponent);
double conditional_remainder_norm(const MartingaleTaggedIncrement& r,
                                  const TimeGrid& grid, int num_samples, int m,
                                  SpaceIndex gamma, double exponent,
                                  const IndexWindow& w);
double total_remainder_norm(const MartingaleTaggedIncrement& r,
                            const TimeGrid& grid, int num_samples, int m,
                            SpaceIndex gamma, double exponent,
                            const IndexWindow& w);

}  // namespace rspde
