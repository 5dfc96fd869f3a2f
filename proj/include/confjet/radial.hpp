#pragma once

#include <cmath>
#include <string>

#include "confjet/series.hpp"

namespace confjet {

/// Series in (chart variables, x) extended by a single power of log x:
///   value = regular(y, x) + log(x) * log_part(y, x).
/// The last variable is the radial coordinate x. Products that would produce
/// (log x)^2 inside the cap are rejected.
template <class S>
class RadialSeries {
 public:
  using scalar_type = S;
  using traits = ScalarTraits<S>;

  RadialSeries() = default;
  RadialSeries(Series<S> regular, Series<S> log_part) : reg_(std::move(regular)), log_(std::move(log_part)) {
    if (reg_.nvars() != log_.nvars()) throw usage_error("radial parts have different variable counts");
    if (reg_.nvars() < 1) throw usage_error("radial series needs the x variable");
    const int c = std::min(reg_.cap(), log_.cap());
    if (reg_.cap() != c) reg_ = reg_.truncated(c);
    if (log_.cap() != c) log_ = log_.truncated(c);
  }
  explicit RadialSeries(Series<S> regular)
      : RadialSeries(regular, Series<S>::zero(regular.nvars(), regular.cap())) {}

  static RadialSeries zero(int nvars, int cap) {
    return RadialSeries(Series<S>::zero(nvars, cap), Series<S>::zero(nvars, cap));
  }
  static RadialSeries constant(int nvars, int cap, const S& v) {
    return RadialSeries(Series<S>::constant(nvars, cap, v), Series<S>::zero(nvars, cap));
  }
  static RadialSeries zero_like(const RadialSeries& p) { return zero(p.nvars(), p.cap()); }

  int nvars() const { return reg_.nvars(); }
  int cap() const { return reg_.cap(); }
  int x_var() const { return reg_.nvars() - 1; }
  bool valid() const { return reg_.valid(); }

  const Series<S>& regular() const { return reg_; }
  const Series<S>& log_part() const { return log_; }

  const S& constant_term() const { return reg_.constant_term(); }
  bool is_zero() const { return reg_.is_zero() && log_.is_zero(); }
  double max_abs() const { return std::max(reg_.max_abs(), log_.max_abs()); }

  /// Coefficient of x^k (log_power 0) or x^k log x (log_power 1) in the chart variables.
  Series<S> coefficient(int k, int log_power) const {
    return log_power == 0 ? reg_.slice_last(k) : log_.slice_last(k);
  }

  RadialSeries truncated(int cap) const { return {reg_.truncated(cap), log_.truncated(cap)}; }
  RadialSeries with_cap(int cap) const { return {reg_.with_cap(cap), log_.with_cap(cap)}; }

  /// Derivative in a chart variable.
  RadialSeries partial(int var) const {
    if (var == x_var()) throw usage_error("use x_derivative() for the radial variable");
    return {reg_.partial(var), log_.partial(var)};
  }

  /// d/dx, using d(x^k log x) = k x^(k-1) log x + x^(k-1).
  RadialSeries x_derivative() const {
    const int x = x_var();
    Series<S> r = reg_.partial(x);
    if (!log_.is_zero()) r += log_.divided_by_variable(x);
    return {std::move(r), log_.partial(x)};
  }

  RadialSeries times_x() const { return {reg_.times_variable(x_var()), log_.times_variable(x_var())}; }
  RadialSeries divided_by_x() const {
    return {reg_.divided_by_variable(x_var()), log_.divided_by_variable(x_var())};
  }

  void add_mul(const RadialSeries& a, const RadialSeries& b) { add_mul(a, b, S(1)); }

  void add_mul(const RadialSeries& a, const RadialSeries& b, const S& f) {
    reg_.add_mul(a.reg_, b.reg_, f);
    const bool al = !a.log_.is_zero(), bl = !b.log_.is_zero();
    if (bl) log_.add_mul(a.reg_, b.log_, f);
    if (al) log_.add_mul(a.log_, b.reg_, f);
    if (al && bl) {
      Series<S> sq = Series<S>::zero(nvars(), cap());
      sq.add_mul(a.log_, b.log_);
      if (!sq.is_zero()) throw usage_error("product produces (log x)^2 within the degree cap");
    }
  }

  void add_scaled(const RadialSeries& a, const S& f) {
    reg_.add_scaled(a.reg_, f);
    log_.add_scaled(a.log_, f);
  }

  RadialSeries& operator+=(const RadialSeries& o) {
    reg_ += o.reg_;
    log_ += o.log_;
    return *this;
  }
  RadialSeries& operator-=(const RadialSeries& o) {
    reg_ -= o.reg_;
    log_ -= o.log_;
    return *this;
  }
  RadialSeries& operator*=(const S& f) {
    reg_ *= f;
    log_ *= f;
    return *this;
  }
  friend RadialSeries operator+(RadialSeries a, const RadialSeries& b) { return a += b; }
  friend RadialSeries operator-(RadialSeries a, const RadialSeries& b) { return a -= b; }
  friend RadialSeries operator-(const RadialSeries& a) { return {-a.reg_, -a.log_}; }
  friend RadialSeries operator*(RadialSeries a, const S& f) { return a *= f; }
  friend RadialSeries operator*(const S& f, RadialSeries a) { return a *= f; }
  friend RadialSeries operator*(const RadialSeries& a, const RadialSeries& b) {
    RadialSeries out = zero(a.nvars(), std::min(a.cap(), b.cap()));
    out.add_mul(a, b);
    return out;
  }
  friend bool operator==(const RadialSeries& a, const RadialSeries& b) {
    return a.reg_ == b.reg_ && a.log_ == b.log_;
  }

  /// Value at a point (chart variables then x > 0).
  S evaluate(std::span<const S> point, const S& log_x) const {
    return reg_.evaluate(point) + log_x * log_.evaluate(point);
  }

 private:
  Series<S> reg_;
  Series<S> log_;
};

}  // namespace confjet
