#pragma once

#include <optional>
#include <string>
#include <vector>

#include "confjet/metric.hpp"

namespace confjet {

// Sign convention: R_abcd with Ric_bd = g^ac R_abcd, so that the round sphere
// has R_abcd = g_ac g_bd - g_ad g_bc and positive Ricci curvature. Covariant
// derivative slots are appended in order: T_{..},ab = (nabla_b nabla_a T)_{..}.

namespace detail {

template <class R>
void add_entry(R& out, const R& a, const TensorJet<R>& t, std::span<const int> idx, const typename R::scalar_type& f) {
  auto e = t.entry(idx);
  if (e.value) out.add_mul(a, *e.value, e.sign > 0 ? f : typename R::scalar_type(-f));
}

template <class R>
void add_entry(R& out, const R& a, const TensorJet<R>& t, std::initializer_list<int> idx,
               const typename R::scalar_type& f) {
  add_entry(out, a, t, std::span<const int>(idx.begin(), idx.size()), f);
}

template <class R>
const R& comp(const TensorJet<R>& t, std::initializer_list<int> idx) {
  auto e = t.entry(idx);
  if (!e.value || e.sign < 0) throw usage_error("component is not stored with a positive sign");
  return *e.value;
}

}  // namespace detail

/// Divergence on `slot`: contraction of that slot with a new derivative slot.
template <class R>
TensorJet<R> divergence(const TensorJet<R>& t, const MetricJet<R>& m, int slot) {
  return contract(covariant_derivative(t, m), m, slot, t.rank());
}

/// Rough Laplacian g^kl T_{..},kl.
template <class R>
TensorJet<R> laplacian(const TensorJet<R>& t, const MetricJet<R>& m) {
  auto dt = covariant_derivative(t, m);
  auto ddt = covariant_derivative(dt, m);
  return contract(ddt, m, t.rank(), t.rank() + 1);
}

/// Riemann tensor in symmetric storage (pair symmetries only; the first
/// Bianchi identity is not imposed).
template <class R>
TensorJet<R> riemann(const MetricJet<R>& m) {
  using S = typename R::scalar_type;
  require_cap("Riemann tensor", 2, m.cap());
  const int n = m.dim(), c = m.cap() - 2;
  const auto& g = m.g();
  const auto& gam = m.christoffel();
  const auto& gf = m.christoffel_first();
  // second derivatives d_k d_l g_ij, indexed by (k <= l, stored ij)
  std::vector<R> dd;
  auto slot = [n](int k, int l) {
    if (k > l) std::swap(k, l);
    return k * n - k * (k - 1) / 2 + (l - k);
  };
  const std::size_t gs = g.stored_size();
  dd.resize(static_cast<std::size_t>(n * (n + 1) / 2) * gs);
  for (int k = 0; k < n; ++k)
    for (std::size_t s = 0; s < gs; ++s) {
      const R dk = g.stored(s).partial(k);
      for (int l = k; l < n; ++l) dd[static_cast<std::size_t>(slot(k, l)) * gs + s] = dk.partial(l);
    }
  auto d2 = [&](int i, int j, int k, int l) -> const R& {
    return dd[static_cast<std::size_t>(slot(k, l)) * gs +
              static_cast<std::size_t>(g.layout().storage(g.layout().flatten(std::vector<int>{i, j})))];
  };
  const S half = S(1) / S(2);
  return TensorJet<R>::generate(n, std::vector<Variance>(4, Variance::Co), Symmetry::riemann(), m.nvars(), c,
                                [&](const std::vector<int>& idx, R& out) {
                                  const int a = idx[0], b = idx[1], cc = idx[2], d = idx[3];
                                  out.add_scaled(d2(a, d, b, cc), half);
                                  out.add_scaled(d2(b, cc, a, d), half);
                                  out.add_scaled(d2(a, cc, b, d), -half);
                                  out.add_scaled(d2(b, d, a, cc), -half);
                                  for (int p = 0; p < n; ++p) {
                                    out.add_mul(detail::comp(gam, {p, b, cc}), detail::comp(gf, {p, a, d}));
                                    out.add_mul(detail::comp(gam, {p, b, d}), detail::comp(gf, {p, a, cc}), S(-1));
                                  }
                                });
}

/// Riemann tensor by the independent route
///   R^a_bcd = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb,
/// lowered with g. Only the antisymmetry in (c, d) is built into storage.
template <class R>
TensorJet<R> riemann_unsymmetrized(const MetricJet<R>& m) {
  using S = typename R::scalar_type;
  require_cap("Riemann tensor", 2, m.cap());
  const int n = m.dim(), c = m.cap() - 2;
  const auto& gam = m.christoffel();
  std::vector<R> dgam;  // dgam[k * stored + s] = d_k Gamma
  for (int k = 0; k < n; ++k)
    for (std::size_t s = 0; s < gam.stored_size(); ++s) dgam.push_back(gam.stored(s).partial(k));
  auto dg = [&](int k, int a, int i, int j) -> const R& {
    const auto& lay = gam.layout();
    return dgam[static_cast<std::size_t>(k) * gam.stored_size() +
                static_cast<std::size_t>(lay.storage(lay.flatten(std::vector<int>{a, i, j})))];
  };
  auto up = TensorJet<R>::generate(
      n, {Variance::Contra, Variance::Co, Variance::Co, Variance::Co}, Symmetry::antisymmetric(2, 3), m.nvars(), c,
      [&](const std::vector<int>& idx, R& out) {
        const int a = idx[0], b = idx[1], cc = idx[2], d = idx[3];
        out.add_scaled(dg(cc, a, d, b), S(1));
        out.add_scaled(dg(d, a, cc, b), S(-1));
        for (int e = 0; e < n; ++e) {
          out.add_mul(detail::comp(gam, {a, cc, e}), detail::comp(gam, {e, d, b}));
          out.add_mul(detail::comp(gam, {a, d, e}), detail::comp(gam, {e, cc, b}), S(-1));
        }
      });
  return lower_index(up, m, 0);
}

/// Ric_bd = g^ac R_abcd.
template <class R>
TensorJet<R> ricci(const TensorJet<R>& riem, const MetricJet<R>& m) {
  const int n = m.dim();
  return TensorJet<R>::generate(n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), m.nvars(), riem.cap(),
                                [&](const std::vector<int>& idx, R& out) {
                                  for (int a = 0; a < n; ++a)
                                    for (int cc = 0; cc < n; ++cc)
                                      detail::add_entry(out, m.ginv_at(a, cc), riem, {a, idx[0], cc, idx[1]},
                                                        typename R::scalar_type(1));
                                });
}

/// Ricci tensor straight from the connection:
///   Ric_bd = d_a G^a_bd - d_d G^a_ab + G^a_ae G^e_bd - G^a_de G^e_ab.
/// Cheaper than contracting the full Riemann tensor.
template <class R>
TensorJet<R> ricci_from_connection(const MetricJet<R>& m) {
  using S = typename R::scalar_type;
  require_cap("Ricci tensor", 2, m.cap());
  const int n = m.dim(), c = m.cap() - 2;
  const auto& gam = m.christoffel();
  const auto& lay = gam.layout();
  auto at = [&](int a, int i, int j) -> const R& {
    return gam.stored(static_cast<std::size_t>(lay.storage(lay.flatten(std::vector<int>{a, i, j}))));
  };
  std::vector<R> v;  // v_b = G^a_ab
  for (int b = 0; b < n; ++b) {
    R s = R::zero(m.nvars(), c + 1);
    for (int a = 0; a < n; ++a) s += at(a, a, b);
    v.push_back(std::move(s));
  }
  return TensorJet<R>::generate(n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), m.nvars(), c,
                                [&](const std::vector<int>& idx, R& out) {
                                  const int b = idx[0], d = idx[1];
                                  for (int a = 0; a < n; ++a) out.add_scaled(at(a, b, d).partial(a), S(1));
                                  out.add_scaled(v[b].partial(d), S(-1));
                                  for (int e = 0; e < n; ++e) {
                                    out.add_mul(v[e], at(e, b, d));
                                    for (int a = 0; a < n; ++a) out.add_mul(at(a, d, e), at(e, a, b), S(-1));
                                  }
                                });
}

/// P = (Ric - R g / (2(n-1))) / (n-2).
template <class R>
TensorJet<R> schouten(const TensorJet<R>& ric, const R& scal, const MetricJet<R>& m) {
  using S = typename R::scalar_type;
  const int n = m.dim();
  if (n < 3) throw usage_error("Schouten tensor needs dimension >= 3");
  return TensorJet<R>::generate(n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), m.nvars(), ric.cap(),
                                [&](const std::vector<int>& idx, R& out) {
                                  ric.accumulate_into(out, idx, S(1) / S(n - 2));
                                  out.add_mul(scal, m.g_at(idx[0], idx[1]), S(-1) / S(2 * (n - 1) * (n - 2)));
                                });
}

/// W = R - (P_ac g_bd + P_bd g_ac - P_ad g_bc - P_bc g_ad).
template <class R>
TensorJet<R> weyl(const TensorJet<R>& riem, const TensorJet<R>& p, const MetricJet<R>& m) {
  using S = typename R::scalar_type;
  return TensorJet<R>::generate(m.dim(), std::vector<Variance>(4, Variance::Co), Symmetry::riemann(), m.nvars(),
                                riem.cap(), [&](const std::vector<int>& idx, R& out) {
                                  const int a = idx[0], b = idx[1], c = idx[2], d = idx[3];
                                  riem.accumulate_into(out, idx, S(1));
                                  out.add_mul(detail::comp(p, {a, c}), m.g_at(b, d), S(-1));
                                  out.add_mul(detail::comp(p, {b, d}), m.g_at(a, c), S(-1));
                                  out.add_mul(detail::comp(p, {a, d}), m.g_at(b, c));
                                  out.add_mul(detail::comp(p, {b, c}), m.g_at(a, d));
                                });
}

/// C_ijk = P_ij,k - P_ik,j.
template <class R>
TensorJet<R> cotton(const TensorJet<R>& p, const MetricJet<R>& m) {
  using S = typename R::scalar_type;
  const auto dp = covariant_derivative(p, m);
  return TensorJet<R>::generate(m.dim(), {Variance::Co, Variance::Co, Variance::Co}, Symmetry::antisymmetric(1, 2),
                                m.nvars(), dp.cap(), [&](const std::vector<int>& idx, R& out) {
                                  dp.accumulate_into(out, idx, S(1));
                                  dp.accumulate_into(out, std::vector<int>{idx[0], idx[2], idx[1]}, S(-1));
                                });
}

/// B_ij = C_ijk,^k - P^kl W_kijl. Stored without imposed symmetry so that
/// its symmetry can be checked.
template <class R>
TensorJet<R> bach(const TensorJet<R>& cot, const TensorJet<R>& p, const TensorJet<R>& w, const MetricJet<R>& m) {
  using S = typename R::scalar_type;
  const int n = m.dim();
  const auto divc = divergence(cot, m, 2);
  const auto pup = raise_index(raise_index(p, m, 0), m, 1);
  return TensorJet<R>::generate(n, {Variance::Co, Variance::Co}, Symmetry::none(), m.nvars(), divc.cap(),
                                [&](const std::vector<int>& idx, R& out) {
                                  divc.accumulate_into(out, idx, S(1));
                                  for (int k = 0; k < n; ++k)
                                    for (int l = 0; l < n; ++l)
                                      detail::add_entry(out, *pup.entry({k, l}).value, w, {k, idx[0], idx[1], l},
                                                        S(-1));
                                });
}

/// All pointwise curvature objects of one metric jet. Members that the cap
/// cannot support are absent and their accessors throw.
template <class R>
class CurvatureSuite {
 public:
  explicit CurvatureSuite(const MetricJet<R>& m) : metric_(m) {
    const int n = m.dim(), cap = m.cap();
    if (cap < 2) return;
    riemann_ = confjet::riemann(m);
    ricci_ = confjet::ricci(*riemann_, m);
    scalar_ = trace(*ricci_, m).stored(0);
    if (n < 3) return;
    schouten_ = confjet::schouten(*ricci_, *scalar_, m);
    weyl_ = confjet::weyl(*riemann_, *schouten_, m);
    if (cap < 3) return;
    cotton_ = confjet::cotton(*schouten_, m);
    if (cap < 4) return;
    bach_ = confjet::bach(*cotton_, *schouten_, *weyl_, m);
  }

  const MetricJet<R>& metric() const { return metric_; }
  int dim() const { return metric_.dim(); }
  int cap() const { return metric_.cap(); }

  const TensorJet<R>& christoffel() const { return metric_.christoffel(); }
  const TensorJet<R>& riemann() const { return get(riemann_, "Riemann tensor", 2); }
  const TensorJet<R>& ricci() const { return get(ricci_, "Ricci tensor", 2); }
  const R& scalar() const { return get(scalar_, "scalar curvature", 2); }
  const TensorJet<R>& schouten() const { return get(schouten_, "Schouten tensor", 2); }
  const TensorJet<R>& weyl() const { return get(weyl_, "Weyl tensor", 2); }
  const TensorJet<R>& cotton() const { return get(cotton_, "Cotton tensor", 3); }
  const TensorJet<R>& bach() const { return get(bach_, "Bach tensor", 4); }

 private:
  template <class T>
  const T& get(const std::optional<T>& v, const char* what, int needed) const {
    if (!v) {
      if (dim() < 3 && needed >= 2 && cap() >= 2) throw usage_error(std::string(what) + " needs dimension >= 3");
      throw insufficient_degree(what, needed, cap());
    }
    return *v;
  }

  MetricJet<R> metric_;
  std::optional<TensorJet<R>> riemann_, ricci_, schouten_, weyl_, cotton_, bach_;
  std::optional<R> scalar_;
};

/// Both sides of W_kijl,^kl = (3-n)(P_ij,k^k - P_ik,j^k).
template <class R>
std::pair<TensorJet<R>, TensorJet<R>> weyl_divergence_check(const CurvatureSuite<R>& suite) {
  const auto& m = suite.metric();
  require_cap("Weyl divergence identity", 4, m.cap());
  const auto v = divergence(suite.weyl(), m, 0);  // V_ijl = W_kijl,^k
  auto lhs = divergence(v, m, 2);
  auto rhs = divergence(suite.cotton(), m, 2);
  rhs *= typename R::scalar_type(3 - m.dim());
  return {std::move(lhs), std::move(rhs)};
}

/// Obstruction tensor from the explicit formulas in dimensions 4 and 6.
template <class R>
TensorJet<R> obstruction_closed_form(const CurvatureSuite<R>& suite) {
  using S = typename R::scalar_type;
  const auto& m = suite.metric();
  const int n = m.dim();
  if (n != 4 && n != 6) throw usage_error("closed-form obstruction exists only for n = 4, 6; use FG solver path");
  require_cap("obstruction tensor", n, m.cap());
  const auto& b = suite.bach();
  if (n == 4) return symmetrized(b, 0, 1);

  const auto& p = suite.schouten();
  const auto& w = suite.weyl();
  const auto& c = suite.cotton();
  const int cap = m.cap() - 6;
  const auto bs = symmetrized(b, 0, 1);
  const auto lap_b = laplacian(bs, m);
  const auto bup = raise_index(raise_index(bs, m, 0), m, 1);
  const auto pup = raise_index(raise_index(p, m, 0), m, 1);
  const auto pmix = raise_index(p, m, 1);  // P_k^m
  const R j = trace(p, m).stored(0);
  const auto dj = covariant_derivative(scalar_tensor(n, j), m);
  const auto dc = covariant_derivative(c, m);    // C_ijk,l
  const auto cup = raise_index(c, m, 2);         // C_ij^l
  const auto cupup = raise_index(cup, m, 1);     // C_i^kl
  // (P g^-1 P)^kl = P^k_m P^ml
  const auto pp = TensorJet<R>::generate(n, {Variance::Contra, Variance::Contra}, Symmetry::symmetric(0, 1),
                                         m.nvars(), pup.cap(), [&](const std::vector<int>& idx, R& out) {
                                           for (int a = 0; a < n; ++a)
                                             out.add_mul(*pup.entry({idx[0], a}).value, *pmix.entry({a, idx[1]}).value);
                                         });
  return TensorJet<R>::generate(
      n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), m.nvars(), cap,
      [&](const std::vector<int>& idx, R& out) {
        const int i = idx[0], jj = idx[1];
        lap_b.accumulate_into(out, idx, S(1));
        out.add_mul(j, *bs.entry({i, jj}).value, S(-4));
        for (int k = 0; k < n; ++k) {
          // 4 J_,l C_(ij)^l
          detail::add_entry(out, *dj.entry({k}).value, cup, {i, jj, k}, S(2));
          detail::add_entry(out, *dj.entry({k}).value, cup, {jj, i, k}, S(2));
          for (int l = 0; l < n; ++l) {
            const R& bkl = *bup.entry({k, l}).value;
            const R& pkl = *pup.entry({k, l}).value;
            detail::add_entry(out, bkl, w, {k, i, jj, l}, S(-2));
            detail::add_entry(out, *pp.entry({k, l}).value, w, {k, i, jj, l}, S(-4));
            // 8 P^kl C_(ij)k,l
            detail::add_entry(out, pkl, dc, {i, jj, k, l}, S(4));
            detail::add_entry(out, pkl, dc, {jj, i, k, l}, S(4));
            // 2 C_i^kl C_jkl
            detail::add_entry(out, *cupup.entry({i, k, l}).value, c, {jj, k, l}, S(2));
          }
        }
        // -4 C^k_i^l C_ljk = -4 g^ka g^lb C_aib C_ljk
        for (int a = 0; a < n; ++a)
          for (int l = 0; l < n; ++l) {
            // sum_k g^ka C_ljk, then multiply by C_ai^l
            R t = R::zero(m.nvars(), cap);
            for (int k = 0; k < n; ++k) detail::add_entry(t, m.ginv_at(k, a), c, {l, jj, k}, S(1));
            if (t.is_zero()) continue;
            detail::add_entry(out, t, cup, {a, i, l}, S(-4));
          }
      });
}

/// First variation of Ricci in the direction h:
///   (h_ik,j^k + h_jk,i^k - h_ij,k^k - h_k^k,ij) / 2.
template <class R>
TensorJet<R> linearized_ricci(const TensorJet<R>& h, const MetricJet<R>& m) {
  using S = typename R::scalar_type;
  const int n = m.dim();
  require_cap("linearized Ricci", 2, std::min(h.cap(), m.cap()));
  const auto dh = covariant_derivative(h, m);
  const auto ddh = covariant_derivative(dh, m);
  const auto hess_tr = covariant_derivative(covariant_derivative(scalar_tensor(n, trace(h, m).stored(0)), m), m);
  const S half = S(1) / S(2);
  return TensorJet<R>::generate(n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), m.nvars(), ddh.cap(),
                                [&](const std::vector<int>& idx, R& out) {
                                  const int i = idx[0], j = idx[1];
                                  for (int k = 0; k < n; ++k)
                                    for (int l = 0; l < n; ++l) {
                                      const R& gi = m.ginv_at(k, l);
                                      detail::add_entry(out, gi, ddh, {i, k, j, l}, half);
                                      detail::add_entry(out, gi, ddh, {j, k, i, l}, half);
                                      detail::add_entry(out, gi, ddh, {i, j, k, l}, -half);
                                    }
                                  hess_tr.accumulate_into(out, idx, -half);
                                });
}

/// Hodge star on the first index pair of a 4-tensor in dimension 4:
///   (*T)_abcd = (1/2) eps_abpq T^pq_cd, eps_0123 = orientation * sqrt(det g).
template <class S>
TensorJet<Series<S>> hodge_first_pair(const TensorJet<Series<S>>& t, const MetricJet<Series<S>>& m, int orientation) {
  using R = Series<S>;
  if (m.dim() != 4) throw usage_error("Hodge star on 2-forms is implemented for n = 4 only");
  if (orientation != 1 && orientation != -1) throw usage_error("orientation must be +1 or -1");
  const R vol = sqrt(determinant(m.g())) * S(orientation);
  const auto up = raise_index(raise_index(t, m, 0), m, 1);
  auto perm_sign = [](int a, int b, int c, int d) {
    int v[4] = {a, b, c, d}, s = 1;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        if (v[i] == v[j]) return 0;
        if (v[i] > v[j]) s = -s;
      }
    return s;
  };
  const auto sym = Symmetry::antisymmetric(0, 1).with({{{2, 3}}, -1});
  return TensorJet<R>::generate(4, t.variance(), sym, m.nvars(), up.cap(), [&](const std::vector<int>& idx, R& out) {
    R acc = R::zero(m.nvars(), up.cap());
    for (int p = 0; p < 4; ++p)
      for (int q = 0; q < 4; ++q) {
        const int s = perm_sign(idx[0], idx[1], p, q);
        if (s) up.accumulate_into(acc, std::vector<int>{p, q, idx[2], idx[3]}, S(s) / S(2));
      }
    out.add_mul(vol, acc);
  });
}

/// W = W+ + W-, with *W+ = W+ and *W- = -W- (star on the first pair).
template <class S>
std::pair<TensorJet<Series<S>>, TensorJet<Series<S>>> weyl_selfdual_split(const CurvatureSuite<Series<S>>& suite,
                                                                          int orientation) {
  if (suite.dim() != 4) throw usage_error("self-dual splitting requires n = 4");
  const auto& w = suite.weyl();
  const auto star = hodge_first_pair(w, suite.metric(), orientation);
  auto wc = w.with_cap(star.cap());
  auto plus = (wc + star) * S(S(1) / S(2));
  auto minus = (wc - star) * S(S(1) / S(2));
  return {std::move(plus), std::move(minus)};
}

/// Pointwise Q-curvature in dimension 4: 6Q = -Delta R + R^2 - 3|Ric|^2.
template <class R>
R q4(const CurvatureSuite<R>& suite) {
  using S = typename R::scalar_type;
  const auto& m = suite.metric();
  if (m.dim() != 4) throw usage_error("q4 requires n = 4");
  require_cap("Q-curvature", 4, m.cap());
  const int c = m.cap() - 4;
  const R& scal = suite.scalar();
  const auto lap = laplacian(scalar_tensor(4, scal), m).stored(0);
  const auto& ric = suite.ricci();
  const auto ricup = raise_index(raise_index(ric, m, 0), m, 1);
  R out = R::zero(m.nvars(), c);
  out.add_scaled(lap.with_cap(c), S(-1) / S(6));
  out.add_mul(scal, scal, S(1) / S(6));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out.add_mul(*ric.entry({i, j}).value, *ricup.entry({i, j}).value, S(-1) / S(2));
  return out;
}

}  // namespace confjet
