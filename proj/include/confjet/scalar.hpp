#pragma once

#include <gmpxx.h>

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>

#include "confjet/errors.hpp"

namespace confjet {

using Rational = mpq_class;

/// Parses "p/q", an integer, or a decimal literal ("0.125", "-1e-3") exactly.
inline Rational parse_rational(std::string_view text) {
  std::string s(text);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  if (s.empty()) throw usage_error("empty numeric literal");
  try {
    if (s.find('/') != std::string::npos) {
      Rational q(s, 10);
      if (q.get_den() == 0) throw usage_error("zero denominator in '" + s + "'");
      q.canonicalize();
      return q;
    }
    // decimal with optional exponent
    std::size_t epos = s.find_first_of("eE");
    std::string mant = s.substr(0, epos);
    long exp10 = 0;
    if (epos != std::string::npos) exp10 = std::stol(s.substr(epos + 1));
    bool neg = false;
    if (!mant.empty() && (mant[0] == '-' || mant[0] == '+')) {
      neg = mant[0] == '-';
      mant.erase(mant.begin());
    }
    std::size_t dot = mant.find('.');
    std::string digits = mant;
    if (dot != std::string::npos) {
      digits = mant.substr(0, dot) + mant.substr(dot + 1);
      exp10 -= static_cast<long>(mant.size() - dot - 1);
    }
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw usage_error("malformed numeric literal '" + s + "'");
    mpz_class num(digits, 10);
    mpz_class pow10;
    mpz_ui_pow_ui(pow10.get_mpz_t(), 10, static_cast<unsigned long>(exp10 < 0 ? -exp10 : exp10));
    Rational q = exp10 < 0 ? Rational(num, pow10) : Rational(num * pow10, 1);
    q.canonicalize();
    return neg ? Rational(-q) : q;
  } catch (const std::invalid_argument&) {
    throw usage_error("malformed numeric literal '" + s + "'");
  }
}

/// Shortest decimal string that round-trips to the same double.
inline std::string shortest_decimal(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class S>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
  static constexpr bool exact = false;
  static constexpr const char* name = "float";

  static double from_int(long v) { return static_cast<double>(v); }
  static double from_rational(const Rational& q) { return q.get_d(); }
  static double to_double(double v) { return v; }
  static bool is_zero(double v) { return v == 0.0; }
  static void fma(double& acc, double a, double b) { acc += a * b; }
  static double sqrt(double v) {
    if (v < 0) throw usage_error("square root of negative scalar");
    return std::sqrt(v);
  }
  static double exp(double v) { return std::exp(v); }
  static double log(double v) { return std::log(v); }
  static std::string to_string(double v) { return shortest_decimal(v); }
};

template <>
struct ScalarTraits<Rational> {
  static constexpr bool exact = true;
  static constexpr const char* name = "rational";

  static Rational from_int(long v) { return Rational(v); }
  static Rational from_rational(const Rational& q) { return q; }
  static double to_double(const Rational& v) { return v.get_d(); }
  static bool is_zero(const Rational& v) { return sgn(v) == 0; }
  static void fma(Rational& acc, const Rational& a, const Rational& b) {
    thread_local Rational tmp;
    mpq_mul(tmp.get_mpq_t(), a.get_mpq_t(), b.get_mpq_t());
    mpq_add(acc.get_mpq_t(), acc.get_mpq_t(), tmp.get_mpq_t());
  }
  static Rational sqrt(const Rational& v) {
    if (sgn(v) < 0) throw usage_error("square root of negative scalar");
    mpz_class p = v.get_num(), q = v.get_den();
    if (!mpz_perfect_square_p(p.get_mpz_t()) || !mpz_perfect_square_p(q.get_mpz_t()))
      throw usage_error("rational backend: " + v.get_str() + " is not a rational square");
    mpz_class rp, rq;
    mpz_sqrt(rp.get_mpz_t(), p.get_mpz_t());
    mpz_sqrt(rq.get_mpz_t(), q.get_mpz_t());
    return Rational(rp, rq);
  }
  static Rational exp(const Rational& v) {
    if (sgn(v) != 0) throw usage_error("rational backend: exp of nonzero constant is irrational");
    return Rational(1);
  }
  static Rational log(const Rational& v) {
    if (v != 1) throw usage_error("rational backend: log of constant other than 1 is irrational");
    return Rational(0);
  }
  static std::string to_string(const Rational& v) { return v.get_str(); }
};

inline Rational ratio(long p, long q = 1) {
  if (q == 0) throw usage_error("zero denominator");
  Rational r(p, q);
  r.canonicalize();
  return r;
}

template <class S>
S scalar(long p, long q = 1) {
  return ScalarTraits<S>::from_rational(ratio(p, q));
}

template <class S>
double to_double(const S& v) {
  return ScalarTraits<S>::to_double(v);
}

}  // namespace confjet
