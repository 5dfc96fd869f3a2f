#pragma once

#include <string>
#include <vector>

#include "confjet/series.hpp"
#include "confjet/tensor.hpp"

namespace confjet {

namespace detail {

/// Exact (or floating) Gauss-Jordan inverse of a dense symmetric matrix,
/// checking positive definiteness through the pivots.
template <class S>
std::vector<S> spd_inverse(std::vector<S> a, int n) {
  using T = ScalarTraits<S>;
  std::vector<S> inv(static_cast<std::size_t>(n * n), S(0));
  for (int i = 0; i < n; ++i) inv[i * n + i] = S(1);
  double scale = 0;
  for (const auto& v : a) scale = std::max(scale, std::abs(to_double(v)));
  for (int col = 0; col < n; ++col) {
    // no pivoting: leading principal minors of an SPD matrix are positive
    const S pivot = a[col * n + col];
    const double pd = to_double(pivot);
    if (T::is_zero(pivot) || (!T::exact && std::abs(pd) <= 1e-14 * scale))
      throw degenerate_metric("metric degenerate at base point");
    if (pd < 0) throw degenerate_metric("metric not positive definite at base point");
    const S ip = S(1) / pivot;
    for (int j = 0; j < n; ++j) {
      a[col * n + j] *= ip;
      inv[col * n + j] *= ip;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const S f = a[r * n + col];
      if (T::is_zero(f)) continue;
      for (int j = 0; j < n; ++j) {
        a[r * n + j] -= f * a[col * n + j];
        inv[r * n + j] -= f * inv[col * n + j];
      }
    }
  }
  return inv;
}

}  // namespace detail

/// Inverse of a symmetric covariant 2-tensor jet, by Newton iteration
/// X <- 2X - X G X with the cap doubling each step.
template <class R>
TensorJet<R> inverse_metric(const TensorJet<R>& g) {
  using S = typename R::scalar_type;
  const int n = g.dim(), cap = g.cap(), nv = g.nvars();
  if (g.rank() != 2) throw usage_error("metric inverse needs a rank-2 tensor");
  std::vector<S> g0(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      g0[i * n + j] = g({i, j}).constant_term();
      if (g0[i * n + j] != S(g({j, i}).constant_term())) throw usage_error("metric is not symmetric");
    }
  auto inv0 = detail::spd_inverse(g0, n);

  const std::vector<Variance> contra{Variance::Contra, Variance::Contra};
  auto x = TensorJet<R>::generate(n, contra, Symmetry::symmetric(0, 1), nv, 0,
                                  [&](const std::vector<int>& idx, R& out) { out = R::constant(nv, 0, inv0[idx[0] * n + idx[1]]); });
  int prec = 0;
  while (prec < cap) {
    const int c = std::min(2 * prec + 1, cap);
    auto xc = x.with_cap(c);
    // w_i^j = g_ik x^kj
    std::vector<R> w(static_cast<std::size_t>(n * n), R::zero(nv, c));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          auto gi = g.entry({i, k});
          auto xk = xc.entry({k, j});
          w[i * n + j].add_mul(*gi.value, *xk.value);
        }
    x = TensorJet<R>::generate(n, contra, Symmetry::symmetric(0, 1), nv, c, [&](const std::vector<int>& idx, R& out) {
      const int i = idx[0], j = idx[1];
      out.add_scaled(*xc.entry({i, j}).value, S(2));
      for (int k = 0; k < n; ++k) out.add_mul(*xc.entry({i, k}).value, w[k * n + j], S(-1));
    });
    prec = c;
  }
  return x;
}

/// A Riemannian metric jet at the chart origin with its inverse and
/// Levi-Civita connection. Immutable after construction.
template <class R>
class MetricJet {
 public:
  using series_type = R;
  using scalar_type = typename R::scalar_type;

  explicit MetricJet(TensorJet<R> g) : g_(std::move(g)) {
    if (g_.rank() != 2 || g_.variance(0) != Variance::Co || g_.variance(1) != Variance::Co)
      throw usage_error("metric must be a covariant 2-tensor");
    // re-store with explicit symmetry (also validates symmetry of the input)
    if (g_.symmetry().key() != Symmetry::symmetric(0, 1).key()) {
      auto sym = TensorJet<R>::covariant(dim(), 2, Symmetry::symmetric(0, 1), nvars(), cap());
      for (int i = 0; i < dim(); ++i)
        for (int j = i; j < dim(); ++j) {
          if (!(g_({i, j}) == g_({j, i}))) throw usage_error("metric is not symmetric");
          sym.set({i, j}, g_({i, j}));
        }
      g_ = std::move(sym);
    }
    ginv_ = inverse_metric(g_);
    if (cap() >= 1) build_connection();
  }

  template <class F>
  static MetricJet from_components(int dim, int nvars, int cap, F&& f) {
    return MetricJet(TensorJet<R>::generate(dim, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), nvars, cap,
                                            [&](const std::vector<int>& idx, R& out) { out = f(idx[0], idx[1]); }));
  }

  int dim() const { return g_.dim(); }
  int nvars() const { return g_.nvars(); }
  int cap() const { return g_.cap(); }

  const TensorJet<R>& g() const { return g_; }
  const TensorJet<R>& inverse() const { return ginv_; }
  /// Gamma^k_ij (contravariant first slot, symmetric in the last two).
  const TensorJet<R>& christoffel() const {
    require_cap("Christoffel symbols", 1, cap());
    return gamma_;
  }
  /// Gamma_{k,ij} = (d_i g_jk + d_j g_ik - d_k g_ij) / 2.
  const TensorJet<R>& christoffel_first() const {
    require_cap("Christoffel symbols", 1, cap());
    return gamma_first_;
  }

  const R& g_at(int i, int j) const { return *g_.entry({i, j}).value; }
  const R& ginv_at(int i, int j) const { return *ginv_.entry({i, j}).value; }

 private:
  void build_connection() {
    using S = scalar_type;
    const int n = dim(), nv = nvars(), c = cap() - 1;
    std::vector<R> dg;  // dg[k][ij stored] = d_k g_ij
    dg.reserve(static_cast<std::size_t>(n) * g_.stored_size());
    for (int k = 0; k < n; ++k)
      for (std::size_t s = 0; s < g_.stored_size(); ++s) dg.push_back(g_.stored(s).partial(k));
    auto d = [&](int k, int i, int j) -> const R& {
      return dg[static_cast<std::size_t>(k) * g_.stored_size() +
                static_cast<std::size_t>(g_.layout().storage(g_.layout().flatten(std::vector<int>{i, j})))];
    };
    const S half = S(1) / S(2);
    gamma_first_ = TensorJet<R>::generate(n, {Variance::Co, Variance::Co, Variance::Co}, Symmetry::symmetric(1, 2), nv,
                                          c, [&](const std::vector<int>& idx, R& out) {
                                            const int k = idx[0], i = idx[1], j = idx[2];
                                            out.add_scaled(d(i, j, k), half);
                                            out.add_scaled(d(j, i, k), half);
                                            out.add_scaled(d(k, i, j), -half);
                                          });
    gamma_ = TensorJet<R>::generate(n, {Variance::Contra, Variance::Co, Variance::Co}, Symmetry::symmetric(1, 2), nv, c,
                                    [&](const std::vector<int>& idx, R& out) {
                                      for (int l = 0; l < n; ++l)
                                        out.add_mul(ginv_at(idx[0], l), *gamma_first_.entry({l, idx[1], idx[2]}).value);
                                    });
  }

  TensorJet<R> g_;
  TensorJet<R> ginv_;
  TensorJet<R> gamma_first_;
  TensorJet<R> gamma_;
};

/// Levi-Civita covariant derivative; appends one covariant slot (last) and
/// lowers the cap by one.
template <class R>
TensorJet<R> covariant_derivative(const TensorJet<R>& t, const MetricJet<R>& metric) {
  using S = typename R::scalar_type;
  if (t.dim() != metric.dim()) throw usage_error("tensor and metric dimensions differ");
  const int n = t.dim(), r = t.rank();
  const int c = std::min(t.cap(), metric.cap()) - 1;
  if (c < 0) throw insufficient_degree("covariant derivative", 1, std::min(t.cap(), metric.cap()));
  const auto& gamma = metric.christoffel();

  std::vector<R> dt;  // dt[m * stored + s] = d_m of stored component s
  dt.reserve(static_cast<std::size_t>(n) * t.stored_size());
  for (int m = 0; m < n; ++m)
    for (std::size_t s = 0; s < t.stored_size(); ++s) dt.push_back(t.stored(s).partial(m));

  auto variance = t.variance();
  variance.push_back(Variance::Co);
  const auto& lay = t.layout();
  return TensorJet<R>::generate(n, variance, t.symmetry(), t.nvars(), c, [&](const std::vector<int>& idx, R& out) {
    const int m = idx[r];
    std::vector<int> base(idx.begin(), idx.begin() + r);
    const auto flat = lay.flatten(base);
    const auto st = lay.storage(flat);
    if (st >= 0)
      out.add_scaled(dt[static_cast<std::size_t>(m) * t.stored_size() + static_cast<std::size_t>(st)],
                     S(lay.sign(flat)));
    for (int s = 0; s < r; ++s) {
      const int a = base[s];
      auto moved = base;
      for (int p = 0; p < n; ++p) {
        moved[s] = p;
        auto te = t.entry(moved);
        if (!te.value) continue;
        if (t.variance(s) == Variance::Co) {
          // - Gamma^p_{m a} T_{..p..}
          auto ge = gamma.entry({p, m, a});
          out.add_mul(*ge.value, *te.value, S(-te.sign));
        } else {
          // + Gamma^a_{m p} T^{..p..}
          auto ge = gamma.entry({a, m, p});
          out.add_mul(*ge.value, *te.value, S(te.sign));
        }
      }
    }
  });
}

/// Contraction over slots a and b, inserting g or g^-1 according to variance.
/// The result keeps the symmetry generators not involving a or b.
template <class R>
TensorJet<R> contract(const TensorJet<R>& t, const MetricJet<R>& metric, int a, int b) {
  using S = typename R::scalar_type;
  const int r = t.rank(), n = t.dim();
  if (a == b || a < 0 || b < 0 || a >= r || b >= r) throw usage_error("invalid contraction slots");
  if (a > b) std::swap(a, b);
  const Variance va = t.variance(a), vb = t.variance(b);
  const bool mixed = va != vb;
  const TensorJet<R>* m = nullptr;
  if (!mixed) m = va == Variance::Co ? &metric.inverse() : &metric.g();
  const int c = mixed ? t.cap() : std::min(t.cap(), metric.cap());

  std::vector<Variance> variance;
  for (int s = 0; s < r; ++s)
    if (s != a && s != b) variance.push_back(t.variance(s));
  auto sym = t.symmetry().without_slots(a, b);
  std::vector<int> full(static_cast<std::size_t>(r));
  return TensorJet<R>::generate(n, variance, sym, t.nvars(), c, [&](const std::vector<int>& idx, R& out) {
    for (int s = 0, q = 0; s < r; ++s)
      if (s != a && s != b) full[s] = idx[q++];
    if (mixed) {
      for (int k = 0; k < n; ++k) {
        full[a] = full[b] = k;
        t.accumulate_into(out, full, S(1));
      }
      return;
    }
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        full[a] = k;
        full[b] = l;
        auto te = t.entry(full);
        if (!te.value) continue;
        out.add_mul(*m->entry({k, l}).value, *te.value, S(te.sign));
      }
  });
}

template <class R>
TensorJet<R> trace(const TensorJet<R>& t, const MetricJet<R>& metric, int a = 0, int b = 1) {
  return contract(t, metric, a, b);
}

namespace detail {
// slots stay in place when an index is moved, so only generators touching it are dropped
inline Symmetry drop_touching(const Symmetry& s, int slot) {
  Symmetry out;
  for (const auto& g : s.generators())
    if (!g.touches(slot)) out = out.with(g);
  return out;
}

template <class R>
TensorJet<R> move_index(const TensorJet<R>& t, const MetricJet<R>& metric, int slot, Variance from) {
  const int n = t.dim();
  if (slot < 0 || slot >= t.rank()) throw usage_error("invalid slot");
  if (t.variance(slot) != from) throw usage_error("slot already has the requested variance");
  const auto& m = from == Variance::Co ? metric.inverse() : metric.g();
  auto variance = t.variance();
  variance[slot] = from == Variance::Co ? Variance::Contra : Variance::Co;
  const int c = std::min(t.cap(), metric.cap());
  using S = typename R::scalar_type;
  return TensorJet<R>::generate(n, variance, drop_touching(t.symmetry(), slot), t.nvars(), c,
                                [&](std::vector<int> idx, R& out) {
                                  const int i = idx[slot];
                                  for (int j = 0; j < n; ++j) {
                                    idx[slot] = j;
                                    auto te = t.entry(idx);
                                    if (!te.value) continue;
                                    out.add_mul(*m.entry({i, j}).value, *te.value, S(te.sign));
                                  }
                                });
}

}  // namespace detail

/// Raise a covariant slot with g^-1.
template <class R>
TensorJet<R> raise_index(const TensorJet<R>& t, const MetricJet<R>& metric, int slot) {
  return detail::move_index(t, metric, slot, Variance::Co);
}

/// Lower a contravariant slot with g.
template <class R>
TensorJet<R> lower_index(const TensorJet<R>& t, const MetricJet<R>& metric, int slot) {
  return detail::move_index(t, metric, slot, Variance::Contra);
}

/// S - (tr_g S / n) g for a symmetric covariant 2-tensor.
template <class R>
TensorJet<R> trace_free_part(const TensorJet<R>& s, const MetricJet<R>& metric) {
  using S = typename R::scalar_type;
  if (s.rank() != 2 || s.variance(0) != Variance::Co || s.variance(1) != Variance::Co)
    throw usage_error("trace-free part needs a covariant 2-tensor");
  const int n = s.dim();
  const R tr = trace(s, metric).stored(0);
  const int c = std::min(s.cap(), metric.cap());
  return TensorJet<R>::generate(n, s.variance(), s.symmetry(), s.nvars(), c, [&](const std::vector<int>& idx, R& out) {
    s.accumulate_into(out, idx, S(1));
    out.add_mul(tr, metric.g_at(idx[0], idx[1]), S(-1) / S(n));
  });
}

/// Scalar jet as a rank-0 tensor.
template <class R>
TensorJet<R> scalar_tensor(int dim, const R& value) {
  TensorJet<R> t(dim, {}, Symmetry::none(), value.nvars(), value.cap());
  t.stored(0) = value;
  return t;
}

/// Determinant of a square matrix of series by elimination with series pivots.
/// Pivots are taken on the diagonal; the constant terms must keep every
/// leading minor invertible (true for positive definite base values).
template <class S>
Series<S> determinant(std::vector<Series<S>> a, int n) {
  if (static_cast<int>(a.size()) != n * n || n < 1) throw usage_error("determinant needs an n x n matrix");
  Series<S> det = Series<S>::constant(a[0].nvars(), a[0].cap(), S(1));
  for (int col = 0; col < n; ++col) {
    const Series<S>& piv = a[col * n + col];
    if (ScalarTraits<S>::is_zero(piv.constant_term())) throw degenerate_metric("metric degenerate at base point");
    det = det * piv;
    const Series<S> inv = reciprocal(piv);
    for (int r = col + 1; r < n; ++r) {
      if (a[r * n + col].is_zero()) continue;
      const Series<S> f = a[r * n + col] * inv;
      for (int j = col + 1; j < n; ++j) a[r * n + j].add_mul(f, a[col * n + j], S(-1));
    }
  }
  return det;
}

template <class S>
Series<S> determinant(const TensorJet<Series<S>>& g) {
  const int n = g.dim();
  if (g.rank() != 2) throw usage_error("determinant needs a rank-2 tensor");
  std::vector<Series<S>> a;
  a.reserve(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a.push_back(g({i, j}));
  return determinant(std::move(a), n);
}

}  // namespace confjet
