#include "rspde/controlled.hpp"

#include <cmath>
#include <stdexcept>

namespace rspde {

// ---- elementary two-parameter evaluators -----------------------------------

namespace {

class DeltaField final : public TwoParamField {
 public:
  explicit DeltaField(std::shared_ptr<const FieldEnsemble> e) : e_(std::move(e)) {}
  FieldShape field_shape() const override { return e_->shape(); }
  void eval_row(int sample, int s, std::span<const int> ts,
                Complex* out) const override {
    const int sz = e_->shape().size();
    const Complex* ys = e_->at(sample, s);
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const Complex* yt = e_->at(sample, ts[k]);
      Complex* o = out + k * sz;
      for (int i = 0; i < sz; ++i) o[i] = yt[i] - ys[i];
    }
  }

 private:
  std::shared_ptr<const FieldEnsemble> e_;
};

class MildDeltaField final : public TwoParamField {
 public:
  MildDeltaField(std::shared_ptr<const FieldEnsemble> e,
                 std::shared_ptr<const PropagatorGridCache> prop)
      : e_(std::move(e)), prop_(std::move(prop)) {}
  FieldShape field_shape() const override { return e_->shape(); }
  void eval_row(int sample, int s, std::span<const int> ts,
                Complex* out) const override {
    const int sz = e_->shape().size();
    std::vector<Complex> state(e_->span(sample, s).begin(),
                               e_->span(sample, s).end());
    int cur = s;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      prop_->apply_range(cur, ts[k], state.data(), e_->shape().channels);
      cur = ts[k];
      const Complex* yt = e_->at(sample, ts[k]);
      Complex* o = out + k * sz;
      for (int i = 0; i < sz; ++i) o[i] = yt[i] - state[i];
    }
  }

 private:
  std::shared_ptr<const FieldEnsemble> e_;
  std::shared_ptr<const PropagatorGridCache> prop_;
};

class TransportDefectField final : public TwoParamField {
 public:
  TransportDefectField(std::shared_ptr<const FieldEnsemble> e,
                       std::shared_ptr<const PropagatorGridCache> prop)
      : e_(std::move(e)), prop_(std::move(prop)) {}
  FieldShape field_shape() const override { return e_->shape(); }
  void eval_row(int sample, int s, std::span<const int> ts,
                Complex* out) const override {
    const int sz = e_->shape().size();
    const Complex* ys = e_->at(sample, s);
    std::vector<Complex> state(ys, ys + sz);
    int cur = s;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      prop_->apply_range(cur, ts[k], state.data(), e_->shape().channels);
      cur = ts[k];
      Complex* o = out + k * sz;
      for (int i = 0; i < sz; ++i) o[i] = state[i] - ys[i];
    }
  }

 private:
  std::shared_ptr<const FieldEnsemble> e_;
  std::shared_ptr<const PropagatorGridCache> prop_;
};

// Y'_s dX(s,t) (optionally transported: S(s,t) Y'_s dX(s,t)). The input has
// c1 x e channels, the output c1 channels.
class GubinelliTermField final : public TwoParamField {
 public:
  GubinelliTermField(std::shared_ptr<const FieldEnsemble> y_prime,
                     std::shared_ptr<const LiftEnsemble> lift,
                     std::shared_ptr<const PropagatorGridCache> prop)
      : yp_(std::move(y_prime)), lift_(std::move(lift)), prop_(std::move(prop)) {
    const int e = lift_->dim_e;
    if (yp_->shape().channels % e != 0)
      throw std::domain_error("gubinelli_term: channel count not divisible by e");
    shape_ = yp_->shape();
    shape_.channels /= e;
  }
  FieldShape field_shape() const override { return shape_; }
  void eval_row(int sample, int s, std::span<const int> ts,
                Complex* out) const override {
    const int e = lift_->dim_e;
    const int c1 = shape_.channels;
    const int modes = shape_.modes();
    const int sz = shape_.size();
    const auto& L = lift_->lift(sample);
    const Complex* base = yp_->at(sample, s);
    std::vector<Complex> state;
    const Complex* src = base;
    if (prop_) {
      state.assign(base, base + yp_->shape().size());
      src = state.data();
    }
    int cur = s;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      if (prop_) {
        prop_->apply_range(cur, ts[k], state.data(), yp_->shape().channels);
        cur = ts[k];
      }
      Complex* o = out + k * sz;
      std::fill(o, o + sz, Complex(0.0, 0.0));
      for (int comp = 0; comp < c1; ++comp)
        for (int j = 0; j < e; ++j) {
          const double dx = L.x_node(ts[k])[j] - L.x_node(s)[j];
          if (dx == 0.0) continue;
          const Complex* col = src + (comp * e + j) * modes;
          Complex* oc = o + comp * modes;
          for (int mo = 0; mo < modes; ++mo) oc[mo] += dx * col[mo];
        }
    }
  }

 private:
  std::shared_ptr<const FieldEnsemble> yp_;
  std::shared_ptr<const LiftEnsemble> lift_;
  std::shared_ptr<const PropagatorGridCache> prop_;
  FieldShape shape_;
};

// dY(s,t) - Y'_s dX(s,t), the recomputed remainder total.
class RemainderTotalField final : public TwoParamField {
 public:
  RemainderTotalField(std::shared_ptr<const FieldEnsemble> y,
                      std::shared_ptr<const FieldEnsemble> yp,
                      std::shared_ptr<const LiftEnsemble> lift)
      : delta_(std::make_shared<DeltaField>(y)),
        gub_(std::make_shared<GubinelliTermField>(yp, lift, nullptr)) {}
  FieldShape field_shape() const override { return delta_->field_shape(); }
  void eval_row(int sample, int s, std::span<const int> ts,
                Complex* out) const override {
    delta_->eval_row(sample, s, ts, out);
    const std::size_t n = ts.size() * field_shape().size();
    std::vector<Complex> buf(n);
    gub_->eval_row(sample, s, ts, buf.data());
    for (std::size_t i = 0; i < n; ++i) out[i] -= buf[i];
  }

 private:
  std::shared_ptr<const DeltaField> delta_;
  std::shared_ptr<const GubinelliTermField> gub_;
};

}  // namespace

std::shared_ptr<const TwoParamField> delta_of(
    std::shared_ptr<const FieldEnsemble> e) {
  return std::make_shared<DeltaField>(std::move(e));
}

std::shared_ptr<const TwoParamField> mild_delta_of(
    std::shared_ptr<const FieldEnsemble> e,
    std::shared_ptr<const PropagatorGridCache> prop) {
  return std::make_shared<MildDeltaField>(std::move(e), std::move(prop));
}

std::shared_ptr<const TwoParamField> transport_defect_of(
    std::shared_ptr<const FieldEnsemble> e,
    std::shared_ptr<const PropagatorGridCache> prop) {
  return std::make_shared<TransportDefectField>(std::move(e), std::move(prop));
}

std::shared_ptr<const TwoParamField> gubinelli_term(
    std::shared_ptr<const FieldEnsemble> y_prime,
    std::shared_ptr<const LiftEnsemble> lift,
    std::shared_ptr<const PropagatorGridCache> prop) {
  return std::make_shared<GubinelliTermField>(std::move(y_prime), std::move(lift),
                                              std::move(prop));
}

ControlledEnsemble make_controlled(
    std::shared_ptr<const FieldEnsemble> y,
    std::shared_ptr<const FieldEnsemble> y_prime,
    std::shared_ptr<const LiftEnsemble> lift, SpaceIndex gamma,
    const HolderExponents& exps,
    std::shared_ptr<const TwoParamField> martingale) {
  if (y_prime->shape().channels != y->shape().channels * lift->dim_e)
    throw std::domain_error("make_controlled: Y' needs c1 x e channels");
  if (y->num_nodes() != lift->grid->num_nodes())
    throw std::domain_error("make_controlled: grid mismatch with lift");
  ControlledEnsemble c;
  c.y = std::move(y);
  c.y_prime = std::move(y_prime);
  c.lift = std::move(lift);
  c.scale_gamma = gamma;
  c.exps = exps;
  c.remainder_tag.total =
      std::make_shared<RemainderTotalField>(c.y, c.y_prime, c.lift);
  c.remainder_tag.martingale = std::move(martingale);
  return c;
}

ControlledEnsemble controlled_linear_comb(double a, const ControlledEnsemble& c1,
                                          double b, const ControlledEnsemble& c2) {
  if (c1.lift != c2.lift)
    throw std::domain_error("controlled_linear_comb: pairs must share the lift");
  if (!c1.y->shape().same_space(c2.y->shape()))
    throw std::domain_error("controlled_linear_comb: shape mismatch");
  auto y = std::make_shared<FieldEnsemble>(*c1.y);
  *y *= a;
  {
    FieldEnsemble tmp(*c2.y);
    tmp *= b;
    *y += tmp;
  }
  auto yp = std::make_shared<FieldEnsemble>(*c1.y_prime);
  *yp *= a;
  {
    FieldEnsemble tmp(*c2.y_prime);
    tmp *= b;
    *yp += tmp;
  }
  std::shared_ptr<const TwoParamField> mart;
  if (c1.remainder_tag.martingale || c2.remainder_tag.martingale) {
    std::vector<std::pair<double, std::shared_ptr<const TwoParamField>>> terms;
    if (c1.remainder_tag.martingale)
      terms.emplace_back(a, c1.remainder_tag.martingale);
    if (c2.remainder_tag.martingale)
      terms.emplace_back(b, c2.remainder_tag.martingale);
    mart = linear_comb_two_param(std::move(terms));
  }
  return make_controlled(std::move(y), std::move(yp), c1.lift, c1.scale_gamma,
                         c1.exps, std::move(mart));
}

// ---- operations --------------------------------------------------------------

const MartingaleTaggedIncrement& remainder(const ControlledEnsemble& c) {
  return c.remainder_tag;
}

MildRemainder mild_remainder(const ControlledEnsemble& c,
                             std::shared_ptr<const PropagatorGridCache> prop) {
  MildRemainder out;
  // Rhat = (mild delta Y) - S Y'_s dX
  out.mild.total = linear_comb_two_param(
      {{1.0, mild_delta_of(c.y, prop)},
       {-1.0, gubinelli_term(c.y_prime, c.lift, prop)}});
  // R - Rhat = (S - id) Y_s + ((S - id) Y'_s) dX; the second term is
  // conditionally centered iff the lift is an Ito enhancement.
  auto transport_y = transport_defect_of(c.y, prop);
  auto gub_transport = linear_comb_two_param(
      {{1.0, gubinelli_term(c.y_prime, c.lift, prop)},
       {-1.0, gubinelli_term(c.y_prime, c.lift, nullptr)}});
  out.plain_minus_mild =
      linear_comb_two_param({{1.0, transport_y}, {1.0, gub_transport}});
  if (c.remainder_tag.martingale) {
    if (c.lift->ito_martingale) {
      // mart(Rhat) = mart(R) - ((S - id) Y'_s) dX
      out.mild.martingale = linear_comb_two_param(
          {{1.0, c.remainder_tag.martingale}, {-1.0, gub_transport}});
    } else {
      out.mild.martingale = c.remainder_tag.martingale;
    }
  } else if (c.lift->ito_martingale) {
    out.mild.martingale =
        linear_comb_two_param({{-1.0, gub_transport}});
  }
  return out;
}

ScrpNormReport scrp_norm(const ControlledEnsemble& c, int m, SpaceIndex gamma,
                         const IndexWindow& w) {
  const double b = c.exps.beta, bp = c.exps.beta_prime;
  ScrpNormReport rep;
  rep.y_norm = lm_sup_norm(*c.y, m, gamma, w) +
               lm_holder_seminorm(*c.y, m, gamma - b, b, false, nullptr, w);
  rep.y_prime_norm =
      lm_sup_norm(*c.y_prime, m, gamma - b, w) +
      lm_holder_seminorm(*c.y_prime, m, gamma - b - bp, bp, false, nullptr, w);
  rep.cond_remainder_norm = conditional_remainder_norm(
      c.remainder_tag, c.grid(), c.num_samples(), m, gamma - b - bp, b + bp, w);
  rep.total = rep.y_norm + rep.y_prime_norm + rep.cond_remainder_norm;
  return rep;
}

ScrpNormReport scrp_norm(const ControlledEnsemble& c, int m, SpaceIndex gamma) {
  return scrp_norm(c, m, gamma, IndexWindow::whole(c.grid()));
}

double scrp_distance(const ControlledEnsemble& c1, const ControlledEnsemble& c2,
                     int m, SpaceIndex gamma, const IndexWindow& w) {
  if (c1.grid().num_nodes() != c2.grid().num_nodes() ||
      c1.num_samples() != c2.num_samples() ||
      !c1.y->shape().same_space(c2.y->shape()))
    throw std::domain_error("scrp_distance: incompatible ensembles");
  const double b = c1.exps.beta, bp = c1.exps.beta_prime;
  FieldEnsemble dy(*c1.y);
  dy -= *c2.y;
  FieldEnsemble dyp(*c1.y_prime);
  dyp -= *c2.y_prime;
  const double ny = lm_sup_norm(dy, m, gamma, w) +
                    lm_holder_seminorm(dy, m, gamma - b, b, false, nullptr, w);
  const double nyp =
      lm_sup_norm(dyp, m, gamma - b, w) +
      lm_holder_seminorm(dyp, m, gamma - b - bp, bp, false, nullptr, w);
  const std::pair<double, const MartingaleTaggedIncrement*> terms[] = {
      {1.0, &c1.remainder_tag}, {-1.0, &c2.remainder_tag}};
  const auto dr = MartingaleTaggedIncrement::linear_comb({terms, 2});
  const double nr = conditional_remainder_norm(dr, c1.grid(), c1.num_samples(),
                                               m, gamma - b - bp, b + bp, w);
  return ny + nyp + nr;
}

double scrp_distance(const ControlledEnsemble& c1, const ControlledEnsemble& c2,
                     int m, SpaceIndex gamma) {
  return scrp_distance(c1, c2, m, gamma, IndexWindow::whole(c1.grid()));
}

// ---- controlled operator families -------------------------------------------

ControlledOperatorFamily::ControlledOperatorFamily(
    int dim_n, int trunc_k, int in_channels, int out_channels, int dim_e,
    SymbolFn g, SymbolFn g_prime, bool constant_in_time, bool deterministic,
    double smoothness_margin)
    : dim_n_(dim_n),
      trunc_k_(trunc_k),
      c1_(in_channels),
      c2_(out_channels),
      dim_e_(dim_e),
      g_(std::move(g)),
      g_prime_(std::move(g_prime)),
      constant_in_time_(constant_in_time),
      deterministic_(deterministic),
      smoothness_margin_(smoothness_margin),
      col_(Collocation::shared(dim_n, trunc_k)) {
  if (constant_in_time_ && deterministic_) {
    cached_g_ = std::make_unique<SpectralField>(g_(0, 0));
    cached_gp_ = std::make_unique<SpectralField>(g_prime_(0, 0));
  }
}

ControlledOperatorFamily ControlledOperatorFamily::constant_symbol(
    const SpectralField& sym, int in_channels, int dim_e) {
  const auto& sh = sym.shape();
  if (sh.channels % in_channels != 0)
    throw std::domain_error("constant_symbol: channel count mismatch");
  const int out_channels = sh.channels / in_channels;
  FieldShape prime_shape{sh.dim_n, sh.trunc_k, out_channels * dim_e * in_channels,
                         true};
  SpectralField zero(prime_shape);
  return ControlledOperatorFamily(
      sh.dim_n, sh.trunc_k, in_channels, out_channels, dim_e,
      [sym](int, int) { return sym; }, [zero](int, int) { return zero; },
      /*constant_in_time=*/true, /*deterministic=*/true);
}

SpectralField ControlledOperatorFamily::symbol(int node, int sample) const {
  return cached_g_ ? *cached_g_ : g_(node, sample);
}

SpectralField ControlledOperatorFamily::symbol_prime(int node,
                                                     int sample) const {
  return cached_gp_ ? *cached_gp_ : g_prime_(node, sample);
}

namespace {

// out_i = sum_j sym_{i*c1+j} * in_j, all through one physical-space pass.
void block_apply(const Collocation& col, const SpectralField& sym, int c1,
                 int c_out, std::span<const Complex> in, std::span<Complex> out) {
  const int modes = sym.shape().modes();
  const int P = col.points();
  std::vector<Complex> in_phys(std::size_t(c1) * P);
  for (int j = 0; j < c1; ++j)
    col.to_phys({in.data() + std::size_t(j) * modes, std::size_t(modes)},
                {in_phys.data() + std::size_t(j) * P, std::size_t(P)});
  std::vector<Complex> sym_phys(P), acc(P);
  for (int i = 0; i < c_out; ++i) {
    std::fill(acc.begin(), acc.end(), Complex(0.0, 0.0));
    for (int j = 0; j < c1; ++j) {
      col.to_phys(sym.channel_span(i * c1 + j), sym_phys);
      const Complex* ip = in_phys.data() + std::size_t(j) * P;
      for (int p = 0; p < P; ++p) acc[p] += sym_phys[p] * ip[p];
    }
    col.to_coef(acc, {out.data() + std::size_t(i) * modes, std::size_t(modes)});
  }
}

}  // namespace

void ControlledOperatorFamily::apply(int node, int sample,
                                     std::span<const Complex> in,
                                     std::span<Complex> out) const {
  if (cached_g_) {
    block_apply(*col_, *cached_g_, c1_, c2_, in, out);
  } else {
    const SpectralField sym = g_(node, sample);
    block_apply(*col_, sym, c1_, c2_, in, out);
  }
}

void ControlledOperatorFamily::apply_prime(int node, int sample,
                                           std::span<const Complex> in,
                                           std::span<Complex> out) const {
  if (cached_gp_) {
    block_apply(*col_, *cached_gp_, c1_, c2_ * dim_e_, in, out);
  } else {
    const SpectralField sym = g_prime_(node, sample);
    block_apply(*col_, sym, c1_, c2_ * dim_e_, in, out);
  }
}

double ControlledOperatorFamily::op_norm_estimate(int node, int sample,
                                                  SpaceIndex g1,
                                                  SpaceIndex g2) const {
  const SpectralField sym = symbol(node, sample);
  if (c1_ == 1 && c2_ == 1)
    return multiplication_operator_norm(*col_, sym.channel_span(0), g1, g2);
  double acc = 0.0;
  for (int i = 0; i < c2_; ++i)
    for (int j = 0; j < c1_; ++j) {
      const double b = multiplication_operator_norm(
          *col_, sym.channel_span(i * c1_ + j), g1, g2);
      acc += b * b;
    }
  return std::sqrt(acc);
}

SpectralField ControlledOperatorFamily::remainder_symbol(
    int s, int t, int sample, const RoughPathLift& lift) const {
  SpectralField out = symbol(t, sample) - symbol(s, sample);
  const SpectralField gp = symbol_prime(s, sample);
  const int modes = out.shape().modes();
  for (int i = 0; i < c2_; ++i)
    for (int j = 0; j < c1_; ++j) {
      Complex* oc = out.coef().data() + std::size_t(i * c1_ + j) * modes;
      for (int l = 0; l < dim_e_; ++l) {
        const double dx = lift.x_node(t)[l] - lift.x_node(s)[l];
        if (dx == 0.0) continue;
        const Complex* pc =
            gp.coef().data() + std::size_t((i * dim_e_ + l) * c1_ + j) * modes;
        for (int mo = 0; mo < modes; ++mo) oc[mo] -= dx * pc[mo];
      }
    }
  return out;
}

namespace {

// G_s applied row-wise to the input martingale part.
class ComposedMartField final : public TwoParamField {
 public:
  ComposedMartField(std::shared_ptr<const ControlledOperatorFamily> g,
                    std::shared_ptr<const TwoParamField> inner)
      : g_(std::move(g)), inner_(std::move(inner)) {
    shape_ = inner_->field_shape();
    shape_.channels = g_->out_channels();
  }
  FieldShape field_shape() const override { return shape_; }
  void eval_row(int sample, int s, std::span<const int> ts,
                Complex* out) const override {
    const int in_sz = inner_->field_shape().size();
    const int out_sz = shape_.size();
    std::vector<Complex> buf(ts.size() * in_sz);
    inner_->eval_row(sample, s, ts, buf.data());
    for (std::size_t k = 0; k < ts.size(); ++k)
      g_->apply(s, sample, {buf.data() + k * in_sz, std::size_t(in_sz)},
                {out + k * out_sz, std::size_t(out_sz)});
  }

 private:
  std::shared_ptr<const ControlledOperatorFamily> g_;
  std::shared_ptr<const TwoParamField> inner_;
  FieldShape shape_;
};

}  // namespace

ControlledEnsemble compose(std::shared_ptr<const ControlledOperatorFamily> g,
                           const ControlledEnsemble& c,
                           std::optional<SpaceIndex> out_gamma) {
  const auto& ysh = c.y->shape();
  if (g->in_channels() != ysh.channels)
    throw std::domain_error("compose: operator input channels != Y channels");
  if (g->dim_e() != c.lift->dim_e)
    throw std::domain_error("compose: rough dimension mismatch");
  if (g->dim_n() != ysh.dim_n || g->trunc_k() != ysh.trunc_k)
    throw std::domain_error("compose: spectral space mismatch");
  const int e = g->dim_e();
  const int c2 = g->out_channels();
  const int modes = ysh.modes();

  FieldShape out_y_shape{ysh.dim_n, ysh.trunc_k, c2, ysh.real_valued};
  FieldShape out_yp_shape{ysh.dim_n, ysh.trunc_k, c2 * e, ysh.real_valued};
  auto y_out = std::make_shared<FieldEnsemble>(out_y_shape, c.y->grid_ptr(),
                                               c.num_samples());
  auto yp_out = std::make_shared<FieldEnsemble>(out_yp_shape, c.y->grid_ptr(),
                                                c.num_samples());
  y_out->adapted = c.y->adapted;
  yp_out->adapted = c.y_prime->adapted;

  const int nodes = c.grid().num_nodes();
  const int c1 = ysh.channels;
  std::vector<Complex> gyp(std::size_t(c2) * e * modes),
      gpy(std::size_t(c2) * e * modes), colbuf(std::size_t(c2) * modes);
  for (int smp = 0; smp < c.num_samples(); ++smp) {
    for (int node = 0; node < nodes; ++node) {
      // G Y
      g->apply(node, smp, c.y->span(smp, node), y_out->span(smp, node));
      // G Y': blocks act on each derivative column separately
      const Complex* ypin = c.y_prime->at(smp, node);
      std::vector<Complex> column(std::size_t(c1) * modes);
      for (int l = 0; l < e; ++l) {
        for (int j = 0; j < c1; ++j)
          std::copy(ypin + (std::size_t(j) * e + l) * modes,
                    ypin + (std::size_t(j) * e + l + 1) * modes,
                    column.begin() + std::size_t(j) * modes);
        g->apply(node, smp, column, colbuf);
        for (int i = 0; i < c2; ++i)
          std::copy(colbuf.begin() + std::size_t(i) * modes,
                    colbuf.begin() + std::size_t(i + 1) * modes,
                    gyp.begin() + (std::size_t(i) * e + l) * modes);
      }
      // G' Y
      g->apply_prime(node, smp, c.y->span(smp, node), gpy);
      Complex* dst = yp_out->at(smp, node);
      for (std::size_t i = 0; i < gyp.size(); ++i) dst[i] = gyp[i] + gpy[i];
    }
  }

  std::shared_ptr<const TwoParamField> mart;
  if (c.remainder_tag.martingale)
    mart = std::make_shared<ComposedMartField>(g, c.remainder_tag.martingale);
  return make_controlled(std::move(y_out), std::move(yp_out), c.lift,
                         out_gamma.value_or(c.scale_gamma), c.exps,
                         std::move(mart));
}

double operator_family_distance(const ControlledOperatorFamily& g1,
                                const ControlledOperatorFamily& g2,
                                const RoughPathLift& lift1,
                                const RoughPathLift& lift2, SpaceIndex gamma,
                                const HolderExponents& exps) {
  if (g1.dim_n() != g2.dim_n() || g1.trunc_k() != g2.trunc_k() ||
      g1.in_channels() != g2.in_channels() ||
      g1.out_channels() != g2.out_channels())
    throw std::domain_error("operator_family_distance: incompatible families");
  auto col = Collocation::shared(g1.dim_n(), g1.trunc_k());
  const double b = exps.beta, bp = exps.beta_prime;
  const int nodes = lift1.num_nodes();
  const int stride = std::max(1, (nodes - 1) / 16);
  const int nsmp = (g1.deterministic() && g2.deterministic()) ? 1 : 4;

  auto dsym_norm = [&](const SpectralField& d, double ga, double gb) {
    double acc = 0.0;
    const int c1 = g1.in_channels(), c2 = g1.out_channels();
    for (int i = 0; i < c2 * c1; ++i) {
      const double v =
          multiplication_operator_norm(*col, d.channel_span(i), ga, gb);
      acc += v * v;
    }
    return std::sqrt(acc);
  };

  double sup0 = 0.0, supb = 0.0, holder = 0.0, prime0 = 0.0, prime_h = 0.0,
         rem = 0.0;
  for (int smp = 0; smp < nsmp; ++smp) {
    for (int i = 0; i < nodes; i += stride) {
      SpectralField d = g1.symbol(i, smp) - g2.symbol(i, smp);
      sup0 = std::max(sup0, dsym_norm(d, gamma, gamma));
      supb = std::max(supb, dsym_norm(d, gamma - b, gamma - b));
      SpectralField dp = g1.symbol_prime(i, smp) - g2.symbol_prime(i, smp);
      // prime blocks map c1 channels to c2*e channels
      double pacc = 0.0;
      for (int ch = 0; ch < dp.shape().channels; ++ch) {
        const double v = multiplication_operator_norm(*col, dp.channel_span(ch),
                                                      gamma, gamma - b);
        pacc += v * v;
      }
      prime0 = std::max(prime0, std::sqrt(pacc));
      if (i + stride < nodes) {
        const int j = i + stride;
        const double tau = lift1.grid().t(j) - lift1.grid().t(i);
        SpectralField dd = (g1.symbol(j, smp) - g2.symbol(j, smp)) - d;
        holder = std::max(holder, dsym_norm(dd, gamma - b, gamma - b) /
                                      std::pow(tau, b));
        SpectralField ddp = (g1.symbol_prime(j, smp) - g2.symbol_prime(j, smp)) - dp;
        double ph = 0.0;
        for (int ch = 0; ch < ddp.shape().channels; ++ch) {
          const double v = multiplication_operator_norm(
              *col, ddp.channel_span(ch), gamma, gamma - b - bp);
          ph += v * v;
        }
        prime_h = std::max(prime_h, std::sqrt(ph) / std::pow(tau, bp));
        SpectralField drs = g1.remainder_symbol(i, j, smp, lift1) -
                            g2.remainder_symbol(i, j, smp, lift2);
        rem = std::max(rem, dsym_norm(drs, gamma, gamma - b - bp) /
                                std::pow(tau, b + bp));
      }
    }
  }
  return sup0 + supb + holder + prime0 + prime_h + rem;
}

}  // namespace rspde
