#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "confjet/errors.hpp"
#include "confjet/monomial.hpp"
#include "confjet/scalar.hpp"

namespace confjet {

/// Truncated multivariate Taylor polynomial: all monomials of total degree
/// <= cap, stored densely in graded-lex order.
///
/// Arithmetic between series with caps D1 and D2 yields cap min(D1, D2);
/// derivatives lower the cap by one. Nothing beyond the cap is ever kept, so
/// every stored coefficient is exact (up to the scalar backend).
template <class S>
class Series {
 public:
  using scalar_type = S;
  using traits = ScalarTraits<S>;

  Series() = default;

  static Series zero(int nvars, int cap) {
    if (cap < 0) throw usage_error("negative degree cap");
    Series out;
    out.basis_ = MonomialBasis::get(nvars, cap);
    out.nvars_ = nvars;
    out.cap_ = cap;
    out.c_.assign(out.basis_->count(cap), S(0));
    return out;
  }

  static Series constant(int nvars, int cap, const S& value) {
    Series out = zero(nvars, cap);
    out.c_[0] = value;
    return out;
  }

  /// The coordinate function x_var.
  static Series variable(int nvars, int cap, int var) {
    Series out = zero(nvars, cap);
    if (var < 0 || var >= nvars) throw usage_error("variable index out of range");
    if (cap >= 1) out.c_[static_cast<std::size_t>(out.basis_->raised(0, var))] = S(1);
    return out;
  }

  /// Same shape as `proto`, all zero.
  static Series zero_like(const Series& proto) { return zero(proto.nvars(), proto.cap()); }

  int nvars() const { return nvars_; }
  int cap() const { return cap_; }
  bool valid() const { return basis_ != nullptr; }
  std::size_t size() const { return c_.size(); }
  const MonomialBasis& basis() const { return *basis_; }

  const S& operator[](std::size_t idx) const { return c_[idx]; }
  S& operator[](std::size_t idx) { return c_[idx]; }

  const S& constant_term() const { return c_[0]; }

  S coefficient(std::span<const int> exps) const {
    auto idx = basis_->find(exps);
    if (idx < 0 || static_cast<std::size_t>(idx) >= c_.size()) return S(0);
    return c_[static_cast<std::size_t>(idx)];
  }
  S coefficient(std::initializer_list<int> exps) const {
    return coefficient(std::span<const int>(exps.begin(), exps.size()));
  }

  void set_coefficient(std::span<const int> exps, const S& value) {
    auto idx = basis_->find(exps);
    if (idx < 0 || static_cast<std::size_t>(idx) >= c_.size())
      throw usage_error("monomial exceeds the degree cap");
    c_[static_cast<std::size_t>(idx)] = value;
  }
  void set_coefficient(std::initializer_list<int> exps, const S& value) {
    set_coefficient(std::span<const int>(exps.begin(), exps.size()), value);
  }

  bool is_zero() const {
    return std::all_of(c_.begin(), c_.end(), [](const S& v) { return traits::is_zero(v); });
  }

  /// Largest |coefficient| as a double.
  double max_abs() const {
    double m = 0;
    for (const auto& v : c_) m = std::max(m, std::abs(to_double(v)));
    return m;
  }

  Series truncated(int cap) const {
    if (cap > cap_) throw insufficient_degree("truncation", cap, cap_);
    Series out = *this;
    out.cap_ = cap;
    out.c_.resize(basis_->count(cap));
    return out;
  }

  /// Truncate or zero-pad to the given cap.
  Series with_cap(int cap) const {
    if (cap <= cap_) return truncated(cap);
    Series out = zero(nvars_, cap);
    std::copy(c_.begin(), c_.end(), out.c_.begin());
    return out;
  }

  /// Formal partial derivative; the cap drops by one.
  Series partial(int var) const {
    check_var(var);
    if (cap_ < 1) throw insufficient_degree("partial derivative", 1, cap_);
    Series out = zero(nvars_, cap_ - 1);
    for (std::size_t i = 1; i < c_.size(); ++i) {
      if (traits::is_zero(c_[i])) continue;
      auto lo = basis_->lowered(i, var);
      if (lo < 0) continue;
      out.c_[static_cast<std::size_t>(lo)] += c_[i] * S(static_cast<long>(basis_->exponents(i)[var]));
    }
    return out;
  }

  /// Multiplication by the coordinate x_var; the cap rises by one.
  Series times_variable(int var) const {
    check_var(var);
    Series out = zero(nvars_, cap_ + 1);
    for (std::size_t i = 0; i < c_.size(); ++i) {
      if (traits::is_zero(c_[i])) continue;
      out.c_[static_cast<std::size_t>(out.basis_->raised(i, var))] = c_[i];
    }
    return out;
  }

  /// Exact division by x_var; every monomial must contain x_var.
  Series divided_by_variable(int var) const {
    check_var(var);
    if (cap_ < 1) throw insufficient_degree("division by a coordinate", 1, cap_);
    Series out = zero(nvars_, cap_ - 1);
    for (std::size_t i = 0; i < c_.size(); ++i) {
      if (traits::is_zero(c_[i])) continue;
      auto lo = basis_->lowered(i, var);
      if (lo < 0) throw usage_error("series is not divisible by the requested coordinate");
      out.c_[static_cast<std::size_t>(lo)] = c_[i];
    }
    return out;
  }

  /// Coefficient of x_last^power as a series in the remaining variables.
  Series slice_last(int power) const {
    if (nvars_ < 1) throw usage_error("slice of a constant series");
    if (power > cap_) throw insufficient_degree("coefficient extraction", power, cap_);
    Series out = zero(nvars_ - 1, cap_ - power);
    std::vector<int> e(static_cast<std::size_t>(nvars_ - 1));
    for (std::size_t i = 0; i < c_.size(); ++i) {
      auto ex = basis_->exponents(i);
      if (ex[nvars_ - 1] != power || traits::is_zero(c_[i])) continue;
      for (int v = 0; v + 1 < nvars_; ++v) e[v] = ex[v];
      out.c_[static_cast<std::size_t>(out.basis_->find(e))] = c_[i];
    }
    return out;
  }

  /// `this * x_new^power` as a series with one extra trailing variable, truncated at `cap`.
  Series embedded_last(int power, int cap) const {
    Series out = zero(nvars_ + 1, cap);
    std::vector<int> e(static_cast<std::size_t>(nvars_ + 1));
    for (std::size_t i = 0; i < c_.size(); ++i) {
      if (basis_->degree(i) + power > cap || traits::is_zero(c_[i])) continue;
      auto ex = basis_->exponents(i);
      for (int v = 0; v < nvars_; ++v) e[v] = ex[v];
      e[nvars_] = power;
      out.c_[static_cast<std::size_t>(out.basis_->find(e))] = c_[i];
    }
    return out;
  }

  S evaluate(std::span<const S> point) const {
    if (static_cast<int>(point.size()) != nvars_) throw usage_error("evaluation point has wrong dimension");
    S sum(0);
    for (std::size_t i = 0; i < c_.size(); ++i) {
      if (traits::is_zero(c_[i])) continue;
      S term = c_[i];
      auto ex = basis_->exponents(i);
      for (int v = 0; v < nvars_; ++v)
        for (int k = 0; k < ex[v]; ++k) term *= point[v];
      sum += term;
    }
    return sum;
  }

  /// this += a * b, truncated at this->cap(). Both factors must reach that cap.
  void add_mul(const Series& a, const Series& b) {
    check_operands(a, b);
    const std::size_t na = a.basis_->count(cap_);
    for (std::size_t ia = 0; ia < na; ++ia) {
      const S& av = a.c_[ia];
      if (traits::is_zero(av)) continue;
      const std::size_t nb = b.basis_->count(cap_ - a.basis_->degree(ia));
      const std::int32_t* row = a.basis_->product_row(ia);
      for (std::size_t ib = 0; ib < nb; ++ib) {
        const S& bv = b.c_[ib];
        if (traits::is_zero(bv)) continue;
        traits::fma(c_[static_cast<std::size_t>(row[ib])], av, bv);
      }
    }
  }

  /// this += factor * a * b.
  void add_mul(const Series& a, const Series& b, const S& factor) {
    if (traits::is_zero(factor)) return;
    check_operands(a, b);
    const std::size_t na = a.basis_->count(cap_);
    S scaled;
    for (std::size_t ia = 0; ia < na; ++ia) {
      if (traits::is_zero(a.c_[ia])) continue;
      scaled = a.c_[ia] * factor;
      const std::size_t nb = b.basis_->count(cap_ - a.basis_->degree(ia));
      const std::int32_t* row = a.basis_->product_row(ia);
      for (std::size_t ib = 0; ib < nb; ++ib) {
        const S& bv = b.c_[ib];
        if (traits::is_zero(bv)) continue;
        traits::fma(c_[static_cast<std::size_t>(row[ib])], scaled, bv);
      }
    }
  }

  /// this += factor * a.
  void add_scaled(const Series& a, const S& factor) {
    if (traits::is_zero(factor)) return;
    check_same_vars(a);
    if (a.cap_ < cap_) throw insufficient_degree("series accumulation", cap_, a.cap_);
    for (std::size_t i = 0; i < c_.size(); ++i)
      if (!traits::is_zero(a.c_[i])) traits::fma(c_[i], a.c_[i], factor);
  }

  Series& operator+=(const Series& o) {
    check_same_vars(o);
    shrink_to(std::min(cap_, o.cap_));
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Series& operator-=(const Series& o) {
    check_same_vars(o);
    shrink_to(std::min(cap_, o.cap_));
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Series& operator*=(const S& f) {
    for (auto& v : c_) v *= f;
    return *this;
  }

  friend Series operator+(Series a, const Series& b) { return a += b; }
  friend Series operator-(Series a, const Series& b) { return a -= b; }
  friend Series operator-(Series a) {
    for (auto& v : a.c_) v = -v;
    return a;
  }
  friend Series operator*(Series a, const S& f) { return a *= f; }
  friend Series operator*(const S& f, Series a) { return a *= f; }
  friend Series operator*(const Series& a, const Series& b) {
    a.check_same_vars(b);
    Series out = zero(a.nvars_, std::min(a.cap_, b.cap_));
    out.add_mul(a, b);
    return out;
  }

  /// Coefficientwise equality on the common cap.
  friend bool operator==(const Series& a, const Series& b) {
    if (a.nvars_ != b.nvars_) return false;
    const std::size_t n = std::min(a.c_.size(), b.c_.size());
    for (std::size_t i = 0; i < n; ++i)
      if (a.c_[i] != b.c_[i]) return false;
    return true;
  }

  friend std::ostream& operator<<(std::ostream& os, const Series& s) {
    bool first = true;
    for (std::size_t i = 0; i < s.c_.size(); ++i) {
      if (traits::is_zero(s.c_[i])) continue;
      if (!first) os << " + ";
      first = false;
      os << traits::to_string(s.c_[i]);
      auto ex = s.basis_->exponents(i);
      for (int v = 0; v < s.nvars_; ++v)
        if (ex[v]) os << "*x" << v << (ex[v] > 1 ? "^" + std::to_string(ex[v]) : std::string());
    }
    if (first) os << "0";
    return os << " + O(" << s.cap_ + 1 << ")";
  }

 private:
  void check_var(int var) const {
    if (var < 0 || var >= nvars_) throw usage_error("variable index " + std::to_string(var) + " out of range");
  }
  void check_same_vars(const Series& o) const {
    if (!basis_ || !o.basis_) throw usage_error("uninitialised series");
    if (o.nvars_ != nvars_) throw usage_error("series variable count mismatch");
  }
  void check_operands(const Series& a, const Series& b) const {
    check_same_vars(a);
    check_same_vars(b);
    if (a.cap_ < cap_) throw insufficient_degree("series product", cap_, a.cap_);
    if (b.cap_ < cap_) throw insufficient_degree("series product", cap_, b.cap_);
  }
  void shrink_to(int cap) {
    if (cap < cap_) {
      cap_ = cap;
      c_.resize(basis_->count(cap));
    }
  }

  std::shared_ptr<const MonomialBasis> basis_;
  int nvars_ = 0;
  int cap_ = -1;
  std::vector<S> c_;
};

/// 1 / a for a series with invertible constant term.
template <class S>
Series<S> reciprocal(const Series<S>& a) {
  const S a0 = a.constant_term();
  if (ScalarTraits<S>::is_zero(a0)) throw usage_error("reciprocal of a series with zero constant term");
  const S inv0 = S(1) / a0;
  // u = a/a0 - 1 has no constant term; 1/(1+u) = sum (-u)^k
  Series<S> u = a * inv0;
  u[0] = S(0);
  Series<S> r = Series<S>::constant(a.nvars(), a.cap(), S(1));
  for (int k = 0; k < a.cap(); ++k) {
    Series<S> next = Series<S>::constant(a.nvars(), a.cap(), S(1));
    next.add_mul(u, r, S(-1));
    r = std::move(next);
  }
  return r * inv0;
}

/// exp(a); on the rational backend the constant term must vanish.
template <class S>
Series<S> exp(const Series<S>& a) {
  const S e0 = ScalarTraits<S>::exp(a.constant_term());
  Series<S> u = a;
  u[0] = S(0);
  // Horner: 1 + u(1 + u/2(1 + u/3(...)))
  Series<S> r = Series<S>::constant(a.nvars(), a.cap(), S(1));
  for (int k = a.cap(); k >= 1; --k) {
    Series<S> next = Series<S>::constant(a.nvars(), a.cap(), S(1));
    next.add_mul(u, r, S(1) / S(k));
    r = std::move(next);
  }
  return r * e0;
}

/// log(a) for positive constant term (exactly 1 on the rational backend).
template <class S>
Series<S> log(const Series<S>& a) {
  const S a0 = a.constant_term();
  const S l0 = ScalarTraits<S>::log(a0);
  Series<S> u = a * (S(1) / a0);
  u[0] = S(0);
  // log(1+u) = u - u^2/2 + u^3/3 - ...
  Series<S> r = Series<S>::zero(a.nvars(), a.cap());
  for (int k = a.cap(); k >= 1; --k) {
    // r <- 1/k - u r
    Series<S> next = Series<S>::constant(a.nvars(), a.cap(), S(1) / S(k));
    next.add_mul(u, r, S(-1));
    r = std::move(next);
  }
  Series<S> out = u * r;
  out[0] += l0;
  return out;
}

/// Square root for positive constant term; on the rational backend the
/// constant term must be a rational square.
template <class S>
Series<S> sqrt(const Series<S>& a) {
  const S a0 = a.constant_term();
  const S s0 = ScalarTraits<S>::sqrt(a0);
  Series<S> u = a * (S(1) / a0);
  u[0] = S(0);
  // (1+u)^(1/2) = sum binom(1/2, k) u^k, evaluated by Horner
  std::vector<S> binom(static_cast<std::size_t>(a.cap()) + 1);
  binom[0] = S(1);
  for (int k = 1; k <= a.cap(); ++k) binom[k] = binom[k - 1] * (S(1) / S(2) - S(k - 1)) / S(k);
  Series<S> r = Series<S>::constant(a.nvars(), a.cap(), binom[static_cast<std::size_t>(a.cap())]);
  for (int k = a.cap() - 1; k >= 0; --k) {
    Series<S> next = Series<S>::constant(a.nvars(), a.cap(), binom[k]);
    next.add_mul(u, r);
    r = std::move(next);
  }
  return r * s0;
}

/// Integer power (negative powers through the reciprocal).
template <class S>
Series<S> pow(const Series<S>& a, int k) {
  Series<S> base = k < 0 ? reciprocal(a) : a;
  int e = k < 0 ? -k : k;
  Series<S> r = Series<S>::constant(a.nvars(), a.cap(), S(1));
  while (e > 0) {
    if (e & 1) r = r * base;
    e >>= 1;
    if (e) base = base * base;
  }
  return r;
}

}  // namespace confjet
