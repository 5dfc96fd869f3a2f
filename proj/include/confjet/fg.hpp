#pragma once

#include <string>
#include <vector>

#include "confjet/curvature.hpp"
#include "confjet/radial.hpp"

namespace confjet {

// Poincare metric g+ = x^-2 (dx^2 + g_x). Radial objects are series in the
// chart variables followed by x (the last variable); a total-degree cap D
// leaves the coefficient of x^s with D - s chart derivatives.

struct Constants {
  int n;
  Rational c;  // c_n = 2^(n-2) ((n/2 - 1)!)^2 / (n - 2)
  Rational k;  // k_n = (-1)^(n/2) n (n - 2) c_n
};

inline Constants constants(int n) {
  if (n < 4 || n % 2) throw usage_error("dimension must be even and >= 4, got " + std::to_string(n));
  Rational fact = 1;
  for (int i = 2; i <= n / 2 - 1; ++i) fact *= i;
  Rational two = 1;
  for (int i = 0; i < n - 2; ++i) two *= 2;
  Rational c = two * fact * fact / (n - 2);
  c.canonicalize();
  Rational k = c * n * (n - 2) * ((n / 2) % 2 ? -1 : 1);
  k.canonicalize();
  return {n, c, k};
}

namespace radial {

// d/dx, multiplication and division by x for both radial series types
template <class S>
Series<S> dx(const Series<S>& s) { return s.partial(s.nvars() - 1); }
template <class S>
RadialSeries<S> dx(const RadialSeries<S>& s) { return s.x_derivative(); }
template <class S>
Series<S> times_x(const Series<S>& s) { return s.times_variable(s.nvars() - 1); }
template <class S>
RadialSeries<S> times_x(const RadialSeries<S>& s) { return s.times_x(); }

/// Componentwise map keeping variance and symmetry.
template <class R, class F>
TensorJet<R> map(const TensorJet<R>& t, int cap, F&& f) {
  return TensorJet<R>::generate(t.dim(), t.variance(), t.symmetry(), t.nvars(), cap,
                                [&](const std::vector<int>& idx, R& out) { out = f(*t.entry(idx).value).with_cap(cap); });
}

/// t(y) * x^power as a tensor in (y, x).
template <class S>
TensorJet<Series<S>> lift(const TensorJet<Series<S>>& t, int power, int cap) {
  return TensorJet<Series<S>>::generate(t.dim(), t.variance(), t.symmetry(), t.nvars() + 1, cap,
                                        [&](const std::vector<int>& idx, Series<S>& out) {
                                          out = t.entry(idx).value->embedded_last(power, cap);
                                        });
}

/// Coefficient of x^power as a tensor in the chart variables.
template <class S>
TensorJet<Series<S>> slice(const TensorJet<Series<S>>& t, int power) {
  return TensorJet<Series<S>>::generate(t.dim(), t.variance(), t.symmetry(), t.nvars() - 1, t.cap() - power,
                                        [&](const std::vector<int>& idx, Series<S>& out) {
                                          out = t.entry(idx).value->slice_last(power);
                                        });
}

template <class S>
TensorJet<Series<S>> slice(const TensorJet<RadialSeries<S>>& t, int power, int log_power) {
  return TensorJet<Series<S>>::generate(t.dim(), t.variance(), t.symmetry(), t.nvars() - 1, t.cap() - power,
                                        [&](const std::vector<int>& idx, Series<S>& out) {
                                          out = t.entry(idx).value->coefficient(power, log_power);
                                        });
}

template <class S>
TensorJet<RadialSeries<S>> to_radial(const TensorJet<Series<S>>& reg, const TensorJet<Series<S>>* log_part) {
  return TensorJet<RadialSeries<S>>::generate(
      reg.dim(), reg.variance(), reg.symmetry(), reg.nvars(), reg.cap(),
      [&](const std::vector<int>& idx, RadialSeries<S>& out) {
        const auto& r = *reg.entry(idx).value;
        out = log_part ? RadialSeries<S>(r, log_part->at(idx).with_cap(reg.cap())) : RadialSeries<S>(r);
      });
}

}  // namespace radial

/// 2x E_ij for g+ = x^-2 (dx^2 + g_x):
///   -x g'' + x g^kl g'_ik g'_jl - (x/2) g^kl g'_kl g' + (n-1) g' + g^kl g'_kl g + 2x Ric(g_x).
/// The result has cap D - 1 for a radial metric of cap D.
template <class R>
TensorJet<R> einstein_rhs(const MetricJet<R>& gx) {
  using S = typename R::scalar_type;
  const int n = gx.dim(), d = gx.cap();
  require_cap("Einstein tensor of a radial metric", 2, d);
  const auto& g = gx.g();
  const auto g1 = radial::map(g, d - 1, [](const R& v) { return radial::dx(v); });
  const auto g2 = radial::map(g1, d - 2, [](const R& v) { return radial::dx(v); });
  const R tr1 = trace(g1, gx).stored(0);
  const auto ric = ricci_from_connection(gx);
  // g^kl g'_jl, mixed
  const auto g1mix = raise_index(g1, gx, 1);
  return TensorJet<R>::generate(n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), gx.nvars(), d - 1,
                                [&](const std::vector<int>& idx, R& out) {
                                  const int i = idx[0], j = idx[1];
                                  R y = R::zero(gx.nvars(), d - 2);
                                  y.add_scaled(*g2.entry({i, j}).value, S(-1));
                                  for (int k = 0; k < n; ++k)
                                    y.add_mul(*g1.entry({i, k}).value, *g1mix.entry({j, k}).value);
                                  y.add_mul(tr1, *g1.entry({i, j}).value, S(-1) / S(2));
                                  y.add_scaled(*ric.entry({i, j}).value, S(2));
                                  out = radial::times_x(y).with_cap(d - 1);
                                  out.add_scaled(*g1.entry({i, j}).value, S(n - 1));
                                  out.add_mul(tr1, *g.entry({i, j}).value);
                                });
}

/// Lowest power of x in the expansion of E (regular or log term). When no
/// nonzero coefficient is visible within the cap, `all_zero` is set and
/// `order` is the first power that is not resolved.
struct VanishingOrder {
  int order = 0;
  bool log_term = false;
  bool all_zero = false;
};

namespace detail {

/// Vanishing order of E given x*E.
template <class S>
VanishingOrder vanishing_order(const TensorJet<RadialSeries<S>>& xe) {
  const int cap = xe.cap();
  for (int k = 0; k <= cap; ++k) {
    bool reg = false, lg = false;
    for (std::size_t s = 0; s < xe.stored_size(); ++s) {
      reg = reg || !xe.stored(s).coefficient(k, 0).is_zero();
      lg = lg || !xe.stored(s).coefficient(k, 1).is_zero();
    }
    if (reg || lg) return {k - 1, lg, false};
  }
  return {cap, false, true};
}

}  // namespace detail

/// Components of E = Ric(g+) + n g+, each multiplied by x so that radial
/// metrics that are not solutions (with an x^-1 term) are representable.
template <class S>
struct EinsteinResidual {
  TensorJet<RadialSeries<S>> xe_ij;  // x E_ij
  TensorJet<RadialSeries<S>> xe_i0;  // x E_i0
  RadialSeries<S> xe_00;             // x E_00
  VanishingOrder order_ij, order_i0, order_00;
};

template <class S>
EinsteinResidual<S> einstein_residual(const MetricJet<RadialSeries<S>>& gx, int n) {
  using R = RadialSeries<S>;
  if (gx.dim() != n) throw usage_error("radial metric dimension does not match n");
  const int d = gx.cap();
  require_cap("Einstein residual", 2, d);
  const auto& g = gx.g();
  const auto g1 = radial::map(g, d - 1, [](const R& v) { return v.x_derivative(); });
  const auto g2 = radial::map(g1, d - 2, [](const R& v) { return v.x_derivative(); });

  EinsteinResidual<S> res;
  res.xe_ij = einstein_rhs(gx) * S(S(1) / S(2));

  // E_i0 = (1/2) g^kl (g'_ik,l - g'_kl,i)
  const auto dg1 = covariant_derivative(g1, gx);
  res.xe_i0 = TensorJet<R>::generate(n, {Variance::Co}, Symmetry::none(), gx.nvars(), d - 1,
                                     [&](const std::vector<int>& idx, R& out) {
                                       R e = R::zero(gx.nvars(), d - 2);
                                       const int i = idx[0];
                                       for (int k = 0; k < n; ++k)
                                         for (int l = 0; l < n; ++l) {
                                           e.add_mul(gx.ginv_at(k, l), *dg1.entry({i, k, l}).value, S(1) / S(2));
                                           e.add_mul(gx.ginv_at(k, l), *dg1.entry({k, l, i}).value, S(-1) / S(2));
                                         }
                                       out = e.times_x().with_cap(d - 1);
                                     });

  // E_00 = -(1/2) g^kl g''_kl + (1/4) g^kl g^pq g'_kp g'_lq + (1/2) x^-1 g^kl g'_kl
  const auto g1up = raise_index(raise_index(g1, gx, 0), gx, 1);
  R e00 = R::zero(gx.nvars(), d - 2);
  e00.add_scaled(trace(g2, gx).stored(0), S(-1) / S(2));
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) e00.add_mul(*g1.entry({k, l}).value, *g1up.entry({k, l}).value, S(1) / S(4));
  res.xe_00 = e00.times_x().with_cap(d - 1);
  res.xe_00.add_scaled(trace(g1, gx).stored(0), S(1) / S(2));

  res.order_ij = detail::vanishing_order(res.xe_ij);
  res.order_i0 = detail::vanishing_order(res.xe_i0);
  res.order_00 = detail::vanishing_order(scalar_tensor(n, res.xe_00));
  return res;
}

/// Left minus right sides of the two contracted Bianchi identities for g+,
/// multiplied by x^2 so that every term is a radial series:
///   g^jk E'_jk - 2 nabla^j E_j0 - (d_x + g^jk g'_jk - 2(n-1)/x) E_00,
///   d_i E_00 + nabla_i E_j^j - 2 nabla^j E_ij - 2 (d_x + g^jk g'_jk / 2 - (n-1)/x) E_i0.
/// Both vanish for every radial metric.
template <class S>
std::pair<RadialSeries<S>, TensorJet<RadialSeries<S>>> bianchi_residual(const MetricJet<RadialSeries<S>>& gx, int n) {
  using R = RadialSeries<S>;
  const auto res = einstein_residual(gx, n);
  const int d = gx.cap();
  const int c = d - 2;
  const auto& xij = res.xe_ij;
  const auto& xi0 = res.xe_i0;
  const R& x00 = res.xe_00;
  const auto g1 = radial::map(gx.g(), d - 1, [](const R& v) { return v.x_derivative(); });
  const R tr1 = trace(g1, gx).stored(0);

  // x^2 f' for f = X / x equals x X' - X
  auto x2_deriv = [](const R& xf) { return xf.x_derivative().times_x() - xf; };

  R b1 = R::zero(gx.nvars(), c);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) b1.add_mul(gx.ginv_at(j, k), x2_deriv(*xij.entry({j, k}).value));
  const auto div0 = contract(covariant_derivative(xi0, gx), gx, 0, 1).stored(0);
  b1 -= div0.times_x() * S(2);
  b1 -= x2_deriv(x00);
  b1 -= (tr1 * x00).times_x();
  b1 += x00 * S(2 * (n - 1));

  const auto dx00 = covariant_derivative(scalar_tensor(n, x00), gx);
  const auto dtr = covariant_derivative(trace(xij, gx), gx);
  const auto divij = contract(covariant_derivative(xij, gx), gx, 1, 2);
  auto b2 = TensorJet<R>::generate(n, {Variance::Co}, Symmetry::none(), gx.nvars(), c,
                                   [&](const std::vector<int>& idx, R& out) {
                                     const int i = idx[0];
                                     R grad = *dx00.entry({i}).value + *dtr.entry({i}).value;
                                     grad.add_scaled(*divij.entry({i}).value, S(-2));
                                     out = grad.times_x().with_cap(c);
                                     const R& xi = *xi0.entry({i}).value;
                                     out.add_scaled(x2_deriv(xi), S(-2));
                                     out.add_scaled((tr1 * xi).times_x(), S(-1));
                                     out.add_scaled(xi, S(2 * (n - 1)));
                                   });
  return {b1.with_cap(c), std::move(b2)};
}

/// Solved radial expansion g_x = sum_{s<n} g^(s) x^s + g^(n) x^n + r0 x^n log x.
template <class S>
struct FGExpansion {
  int n = 0;
  int order = 0;  // highest x-order solved
  Constants consts{};
  /// g^(s) for s = 0..order (g^(0) = g); g^(n) is pure trace.
  std::vector<TensorJet<Series<S>>> coefficients;
  /// Obstruction tensor and first log coefficient (only when order == n).
  TensorJet<Series<S>> obstruction;
  TensorJet<Series<S>> log_coefficient;
  /// g^kl g^(n)_kl.
  Series<S> trace_n;
  /// Assembled radial metric in (y, x), with and without the log term.
  TensorJet<RadialSeries<S>> gx;
  TensorJet<RadialSeries<S>> smooth_gx;

  bool complete() const { return order == n; }
};

/// Solves E_ij = 0 order by order in x up to `max_order` (default n). At each
/// s < n the x^(s-1) coefficient F_s of 2xE (with g^(s) unknown set to 0)
/// determines g^(s) through s[(n - s) eta + tr(eta) g] = -F_s. At s = n the
/// trace-free part of F_n is the obstruction: O = c_n tf(F_n) / 2,
/// r0 = tf(F_n) / n and tr g^(n) = -tr(F_n) / n^2.
template <class S>
FGExpansion<S> fg_expand(const MetricJet<Series<S>>& g, int max_order = -1) {
  using R = Series<S>;
  const int n = g.dim(), d = g.cap();
  const Constants k = constants(n);
  if (g.nvars() != n) throw usage_error("metric jet must be a series in its own chart variables");
  if (max_order < 0) max_order = n;
  if (max_order > n) throw usage_error("expansion is solved up to order n only");
  require_cap("FG expansion to order " + std::to_string(max_order), max_order, d);

  FGExpansion<S> out;
  out.n = n;
  out.consts = k;
  out.coefficients.push_back(g.g());

  auto assemble = [&](int upto) {
    auto sum = radial::lift(out.coefficients[0], 0, d);
    for (int s = 1; s <= upto && s < static_cast<int>(out.coefficients.size()); ++s)
      sum += radial::lift(out.coefficients[s], s, d);
    return sum;
  };

  for (int s = 1; s <= max_order; ++s) {
    const MetricJet<R> gx(assemble(s - 1));
    const auto f = radial::slice(einstein_rhs(gx), s - 1);  // cap d - s
    const R trf = trace(f, g).stored(0);
    if (s < n) {
      // (n - s) eta + tr(eta) g = A with A = -F / s
      const S inv_s = S(-1) / S(s);
      const R tr_eta = trf * S(inv_s / S(2 * n - s));
      out.coefficients.push_back(TensorJet<R>::generate(
          n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), n, d - s,
          [&](const std::vector<int>& idx, R& e) {
            e.add_scaled(*f.entry(idx).value, inv_s);
            e.add_mul(tr_eta, g.g_at(idx[0], idx[1]), S(-1));
            e *= S(S(1) / S(n - s));
          }));
    } else {
      const auto tf = trace_free_part(f, g);
      out.obstruction = tf * ScalarTraits<S>::from_rational(Rational(k.c / 2));
      out.log_coefficient = tf * S(S(1) / S(n));
      out.trace_n = trf * S(S(-1) / S(n * n));
      out.coefficients.push_back(TensorJet<R>::generate(
          n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), n, d - n,
          [&](const std::vector<int>& idx, R& e) { e.add_mul(out.trace_n, g.g_at(idx[0], idx[1]), S(S(1) / S(n))); }));
    }
  }
  out.order = max_order;

  // (log x)^2 terms stay outside the cap when it is below 2n
  const int rc = std::min(d, 2 * n - 1);
  const auto reg = assemble(max_order).with_cap(rc);
  out.smooth_gx = radial::to_radial<S>(reg, nullptr);
  if (out.complete()) {
    const auto lg = radial::lift(out.log_coefficient, n, rc);
    out.gx = radial::to_radial<S>(reg, &lg);
  } else {
    out.gx = out.smooth_gx;
  }
  return out;
}

template <class S>
TensorJet<Series<S>> obstruction_fg(const MetricJet<Series<S>>& g) {
  require_cap("obstruction tensor", g.dim(), g.cap());
  return fg_expand(g).obstruction;
}

/// g_x = (1 - lambda x^2)^2 g, the exact solution for Ric(g) = 4 lambda (n-1) g.
/// The Einstein condition is checked on the jet; a violation is reported in
/// `warnings` (the radial metric is still returned).
template <class S>
TensorJet<RadialSeries<S>> einstein_exact_solution(const MetricJet<Series<S>>& g, const S& lambda,
                                                  std::vector<std::string>* warnings = nullptr) {
  using R = Series<S>;
  const int n = g.dim(), d = g.cap();
  if (d >= 2) {
    const auto ric = ricci_from_connection(g);
    const auto expected = g.g().with_cap(d - 2) * S(lambda * S(4 * (n - 1)));
    if (!(ric == expected)) {
      if (warnings) warnings->push_back("metric jet is not Einstein with Ric = 4 lambda (n-1) g");
    }
  } else if (warnings) {
    warnings->push_back("degree cap too small to check the Einstein condition");
  }
  const int nv = n + 1;
  R factor = R::constant(nv, d, S(1));
  const R x2 = R::variable(nv, d, n) * R::variable(nv, d, n);
  factor.add_scaled(x2, S(-lambda));
  const R f2 = factor * factor;
  const auto lifted = radial::lift(g.g(), 0, d);
  return radial::to_radial<S>(radial::map(lifted, d, [&](const R& v) { return f2 * v; }), nullptr);
}

}  // namespace confjet
