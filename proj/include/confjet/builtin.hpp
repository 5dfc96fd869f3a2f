#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "confjet/metric.hpp"

namespace confjet::builtin {

/// Euclidean metric jet.
template <class S>
MetricJet<Series<S>> flat(int n, int cap, int nvars = -1) {
  if (nvars < 0) nvars = n;
  return MetricJet<Series<S>>::from_components(
      n, nvars, cap, [&](int i, int j) { return Series<S>::constant(nvars, cap, S(i == j ? 1 : 0)); });
}

/// Sphere of sectional curvature kappa in geodesic normal coordinates:
///   g = delta + f(r) (delta - x x^T / r^2),  1 + f = sin^2(sqrt(kappa) r) / (kappa r^2).
/// With u = kappa r^2 both f and f / r^2 are power series in u, so the jet
/// has rational coefficients whenever kappa is rational. kappa = 4 lambda gives
/// Ric = 4 lambda (n - 1) g.
template <class S>
MetricJet<Series<S>> sphere_normal(int n, int cap, const S& kappa) {
  using R = Series<S>;
  // sin^2(y)/y^2 = sum_{k>=1} (-1)^(k+1) 2^(2k-1) u^(k-1) / (2k)!
  const int terms = cap / 2 + 2;
  std::vector<S> a(static_cast<std::size_t>(terms) + 1, S(0));  // coefficient of u^(k-1)
  S fact = S(1), pw = S(1) / S(2);
  for (int k = 1; k <= terms; ++k) {
    fact *= S((2 * k - 1) * (2 * k));
    pw *= S(4);
    a[k] = (k % 2 ? S(1) : S(-1)) * pw / fact;
  }
  R r2 = R::zero(n, cap);
  for (int i = 0; i < n; ++i) r2.add_mul(R::variable(n, cap, i), R::variable(n, cap, i));
  const R u = r2 * kappa;
  // f = sum_{k>=2} a[k] u^(k-1); F = f / u = sum_{k>=2} a[k] u^(k-2)
  R f = R::zero(n, cap), big_f = R::zero(n, cap), upow = R::constant(n, cap, S(1));
  for (int k = 2; k <= terms; ++k) {
    big_f.add_scaled(upow, a[k]);
    upow = upow * u;
    f.add_scaled(upow, a[k]);
  }
  const R kf = big_f * kappa;
  return MetricJet<R>::from_components(n, n, cap, [&](int i, int j) {
    R out = R::zero(n, cap);
    if (i == j) out = f + R::constant(n, cap, S(1));
    out.add_mul(kf, R::variable(n, cap, i) * R::variable(n, cap, j), S(-1));
    return out;
  });
}

/// Conformally flat jet e^(2 ups) delta. On the rational backend ups(0) must vanish.
template <class S>
MetricJet<Series<S>> conformally_flat(const Series<S>& ups, int n) {
  if (ups.nvars() != n) throw usage_error("conformal factor must be a series in the chart variables");
  const Series<S> e = exp(ups * S(2));
  return MetricJet<Series<S>>::from_components(
      n, n, ups.cap(), [&](int i, int j) { return i == j ? e : Series<S>::zero(n, ups.cap()); });
}

/// Stereographic chart of the sphere of curvature kappa: (1 + kappa |x|^2 / 4)^(-2) delta.
template <class S>
MetricJet<Series<S>> sphere_stereographic(int n, int cap, const S& kappa) {
  using R = Series<S>;
  R q = R::constant(n, cap, S(1));
  for (int i = 0; i < n; ++i) q.add_mul(R::variable(n, cap, i), R::variable(n, cap, i), kappa / S(4));
  const R conf = pow(q, -2);
  return MetricJet<R>::from_components(n, n, cap, [&](int i, int j) { return i == j ? conf : R::zero(n, cap); });
}

/// Block-diagonal product of normal-coordinate spheres. Each factor is
/// (dimension, curvature); the chart variables are concatenated.
template <class S>
MetricJet<Series<S>> sphere_product(const std::vector<std::pair<int, S>>& factors, int cap) {
  using R = Series<S>;
  int n = 0;
  for (const auto& f : factors) {
    if (f.first < 1) throw usage_error("product factor dimension must be positive");
    n += f.first;
  }
  std::vector<R> comps(static_cast<std::size_t>(n * n), R::zero(n, cap));
  int off = 0;
  for (const auto& [d, kappa] : factors) {
    const auto block = sphere_normal<S>(d, cap, kappa);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        // re-embed the factor's variables at offset `off`
        const R& src = block.g_at(i, j);
        R dst = R::zero(n, cap);
        std::vector<int> e(static_cast<std::size_t>(n), 0);
        for (std::size_t k = 0; k < src.size(); ++k) {
          if (ScalarTraits<S>::is_zero(src[k])) continue;
          const auto ex = src.basis().exponents(k);
          std::fill(e.begin(), e.end(), 0);
          for (int v = 0; v < d; ++v) e[off + v] = ex[v];
          dst.set_coefficient(e, src[k]);
        }
        comps[(off + i) * n + off + j] = std::move(dst);
      }
    off += d;
  }
  return MetricJet<R>::from_components(n, n, cap, [&](int i, int j) { return comps[i * n + j]; });
}

/// Omega^2 g for a positive jet Omega.
template <class S>
MetricJet<Series<S>> conformal_rescale(const MetricJet<Series<S>>& g, const Series<S>& omega) {
  if (!(to_double(omega.constant_term()) > 0)) throw usage_error("conformal factor must be positive at the base point");
  const int cap = std::min(g.cap(), omega.cap());
  const Series<S> o2 = (omega * omega).with_cap(cap);
  return MetricJet<Series<S>>::from_components(g.dim(), g.nvars(), cap,
                                               [&](int i, int j) { return (o2 * g.g_at(i, j)).with_cap(cap); });
}

/// Random rational with numerator in [-range, range] and denominator in {1, 2, 3}.
inline Rational random_small_rational(std::mt19937_64& rng, int range = 3) {
  std::uniform_int_distribution<int> num(-range, range);
  std::uniform_int_distribution<int> den(1, 3);
  return ratio(num(rng), den(rng));
}

/// Random metric jet: identity plus small symmetric off-diagonal base values
/// and small rational Taylor coefficients. `density` is the probability that a
/// given higher coefficient is nonzero.
template <class S>
MetricJet<Series<S>> random_metric(int n, int cap, std::uint64_t seed, double density = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> off(-1, 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  return MetricJet<Series<S>>::from_components(n, n, cap, [&](int i, int j) {
    auto s = Series<S>::zero(n, cap);
    s[0] = i == j ? S(1) : ScalarTraits<S>::from_rational(ratio(off(rng), 4));
    for (std::size_t k = 1; k < s.size(); ++k)
      if (coin(rng) < density) s[k] = ScalarTraits<S>::from_rational(random_small_rational(rng));
    return s;
  });
}

}  // namespace confjet::builtin
