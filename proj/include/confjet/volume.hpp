#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "confjet/curvature.hpp"
#include "confjet/fg.hpp"

namespace confjet {

// ---------------------------------------------------------------------------
// Base-point volume coefficients

/// Coefficients of (det g_x / det g)^(1/2) = 1 + v2 x^2 + ... + vn x^n at the
/// base point, indexed by the power of x (entry 0 is 1). Only the regular part
/// of g_x enters; the x^n log x term drops out because tr(g^-1 r0) = 0, which
/// `determinant_log_term` exposes for checking.
template <class S>
std::vector<S> volume_coeffs(const FGExpansion<S>& fg, const MetricJet<Series<S>>& g) {
  const int n = fg.n, top = fg.order;
  if (g.dim() != n) throw usage_error("metric and expansion dimensions differ");
  std::vector<Series<S>> a;
  a.reserve(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      auto s = Series<S>::zero(1, top);
      for (int k = 0; k <= top; ++k) s[k] = fg.coefficients[k]({i, j}).constant_term();
      a.push_back(std::move(s));
    }
  const auto det = determinant(std::move(a), n);
  const auto ratio_series = det * S(S(1) / det.constant_term());
  const auto root = sqrt(ratio_series);
  std::vector<S> v(static_cast<std::size_t>(top) + 1);
  for (int k = 0; k <= top; ++k) v[k] = root[k];
  return v;
}

/// Coefficient of x^n log x in (det g_x / det g)^(1/2) at the base point: tr(g^-1 r0) / 2.
template <class S>
S determinant_log_term(const FGExpansion<S>& fg, const MetricJet<Series<S>>& g) {
  if (!fg.complete()) throw usage_error("log term needs the expansion solved to order n");
  return trace(fg.log_coefficient, g).stored(0).constant_term() * S(S(1) / S(2));
}

// ---------------------------------------------------------------------------
// Trigonometric fields on the torus [0, 2 pi)^n

/// a cos(k.y) + b sin(k.y)
struct TrigTerm {
  std::vector<int> k;
  double a = 0;
  double b = 0;
};

/// Finite real Fourier sum. Terms are kept canonical: one entry per wave
/// vector, with the first nonzero component of k positive.
class TrigField {
 public:
  TrigField() = default;
  explicit TrigField(int n) : n_(n) {
    if (n < 1) throw usage_error("trig field dimension must be positive");
  }

  static TrigField constant(int n, double c) {
    TrigField f(n);
    f.add(std::vector<int>(static_cast<std::size_t>(n), 0), c, 0);
    return f;
  }

  int dim() const { return n_; }
  bool empty() const { return terms_.empty(); }

  std::vector<TrigTerm> terms() const {
    std::vector<TrigTerm> out;
    out.reserve(terms_.size());
    for (const auto& [k, ab] : terms_) out.push_back({k, ab.first, ab.second});
    return out;
  }

  TrigField& add(std::vector<int> k, double a, double b) {
    if (static_cast<int>(k.size()) != n_) throw usage_error("wave vector has wrong length");
    const auto nz = std::find_if(k.begin(), k.end(), [](int v) { return v != 0; });
    if (nz == k.end()) {
      b = 0;  // sin(0) vanishes
    } else if (*nz < 0) {
      for (int& v : k) v = -v;
      b = -b;
    }
    auto& slot = terms_[k];
    slot.first += a;
    slot.second += b;
    if (slot.first == 0 && slot.second == 0) terms_.erase(k);
    return *this;
  }

  /// Largest |k_i| over all terms.
  int max_wave() const {
    int m = 0;
    for (const auto& [k, ab] : terms_)
      for (int v : k) m = std::max(m, std::abs(v));
    return m;
  }

  double value(std::span<const double> y) const {
    double s = 0;
    for (const auto& [k, ab] : terms_) {
      const double th = phase(k, y);
      s += ab.first * std::cos(th) + ab.second * std::sin(th);
    }
    return s;
  }

  /// Taylor jet at p in the displacement u: the coefficient of u^e is
  /// D_|e| prod_i k_i^e_i / e_i!, with D cycling through c, s, -c, -s.
  Series<double> jet(std::span<const double> p, int cap) const {
    auto out = Series<double>::zero(n_, cap);
    std::vector<double> inv_fact(static_cast<std::size_t>(cap) + 1, 1.0);
    for (int i = 1; i <= cap; ++i) inv_fact[i] = inv_fact[i - 1] / i;
    for (const auto& [k, ab] : terms_) {
      const double th = phase(k, p);
      const double c = ab.first * std::cos(th) + ab.second * std::sin(th);
      const double s = ab.second * std::cos(th) - ab.first * std::sin(th);
      const double cyc[4] = {c, s, -c, -s};
      for (std::size_t idx = 0; idx < out.size(); ++idx) {
        const auto e = out.basis().exponents(idx);
        double m = 1;
        int deg = 0;
        for (int i = 0; i < n_ && m != 0; ++i) {
          if (e[i] == 0) continue;
          m *= std::pow(static_cast<double>(k[i]), e[i]) * inv_fact[e[i]];
          deg += e[i];
        }
        if (m != 0) out[idx] += cyc[deg % 4] * m;
      }
    }
    return out;
  }

  TrigField scaled(double f) const {
    TrigField out(n_);
    if (f == 0) return out;
    out.terms_ = terms_;
    for (auto& [k, ab] : out.terms_) {
      ab.first *= f;
      ab.second *= f;
    }
    return out;
  }

  friend TrigField operator+(const TrigField& x, const TrigField& y) {
    check_dims(x, y);
    TrigField out = x;
    for (const auto& [k, ab] : y.terms_) out.add(k, ab.first, ab.second);
    return out;
  }

  /// Product via the product-to-sum identities.
  friend TrigField operator*(const TrigField& x, const TrigField& y) {
    check_dims(x, y);
    TrigField out(x.n_);
    for (const auto& [k1, p] : x.terms_)
      for (const auto& [k2, q] : y.terms_) {
        const auto [a1, b1] = p;
        const auto [a2, b2] = q;
        std::vector<int> plus(k1.size()), minus(k1.size());
        for (std::size_t i = 0; i < k1.size(); ++i) {
          plus[i] = k1[i] + k2[i];
          minus[i] = k1[i] - k2[i];
        }
        out.add(plus, 0.5 * (a1 * a2 - b1 * b2), 0.5 * (b1 * a2 + a1 * b2));
        out.add(minus, 0.5 * (a1 * a2 + b1 * b2), 0.5 * (b1 * a2 - a1 * b2));
      }
    return out;
  }

  friend bool operator==(const TrigField& x, const TrigField& y) { return x.n_ == y.n_ && x.terms_ == y.terms_; }

 private:
  static double phase(const std::vector<int>& k, std::span<const double> y) {
    double th = 0;
    for (std::size_t i = 0; i < k.size(); ++i) th += k[i] * y[i];
    return th;
  }
  static void check_dims(const TrigField& x, const TrigField& y) {
    if (x.n_ != y.n_) throw usage_error("trig fields have different dimensions");
  }

  int n_ = 0;
  std::map<std::vector<int>, std::pair<double, double>> terms_;
};

/// Symmetric 2-tensor field sum_m e^(2 ups_m) A_m with trigonometric ups_m and
/// A_m. Jets are exact: the trig parts are differentiated analytically and the
/// exponential is a series operation.
class FourierField {
 public:
  struct Block {
    TrigField ups;                  // empty means 0
    std::vector<TrigField> comps;   // upper triangle, row-major (i <= j)
  };

  FourierField() = default;
  explicit FourierField(int n) : n_(n) {
    if (n < 1) throw usage_error("field dimension must be positive");
  }

  /// Single block with no conformal factor; comps(i, j) is queried for i <= j.
  template <class F>
  static FourierField from_components(int n, F&& comps) {
    FourierField f(n);
    Block b;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        TrigField c = comps(i, j);
        if (c.dim() != n) throw usage_error("component dimension mismatch at (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
        b.comps.push_back(std::move(c));
      }
    f.blocks_.push_back(std::move(b));
    return f;
  }

  static FourierField identity(int n) {
    return from_components(n, [&](int i, int j) { return i == j ? TrigField::constant(n, 1) : TrigField(n); });
  }

  int dim() const { return n_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  static int slot(int n, int i, int j) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i - 1) / 2 + (j - i);
  }

  /// Largest wave number, counting the conformal exponents (whose exponentials
  /// are not trigonometric polynomials, so this is a lower bound for them).
  int max_wave() const {
    int m = 0;
    for (const auto& b : blocks_) {
      m = std::max(m, b.ups.max_wave());
      for (const auto& c : b.comps) m = std::max(m, c.max_wave());
    }
    return m;
  }
  bool has_conformal_factor() const {
    return std::any_of(blocks_.begin(), blocks_.end(), [](const Block& b) { return !b.ups.empty(); });
  }

  /// Row-major n x n values at y.
  std::vector<double> value(std::span<const double> y) const {
    std::vector<double> out(static_cast<std::size_t>(n_ * n_), 0.0);
    for (const auto& b : blocks_) {
      const double f = b.ups.empty() ? 1.0 : std::exp(2 * b.ups.value(y));
      for (int i = 0; i < n_; ++i)
        for (int j = i; j < n_; ++j) {
          const double v = f * b.comps[slot(n_, i, j)].value(y);
          out[i * n_ + j] += v;
          if (i != j) out[j * n_ + i] += v;
        }
    }
    return out;
  }

  /// Jet at p in the displacement variables.
  TensorJet<Series<double>> jet(std::span<const double> p, int cap) const {
    using R = Series<double>;
    std::vector<R> comps(static_cast<std::size_t>(n_ * (n_ + 1) / 2), R::zero(n_, cap));
    for (const auto& b : blocks_) {
      std::optional<R> f;
      if (!b.ups.empty()) f = exp(b.ups.jet(p, cap) * 2.0);
      for (std::size_t s = 0; s < comps.size(); ++s) {
        if (b.comps[s].empty()) continue;
        const R c = b.comps[s].jet(p, cap);
        if (f)
          comps[s].add_mul(*f, c);
        else
          comps[s] += c;
      }
    }
    return TensorJet<R>::generate(n_, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), n_, cap,
                                  [&](const std::vector<int>& idx, R& out) { out = comps[slot(n_, idx[0], idx[1])]; });
  }

  /// this + t * other (blocks appended).
  FourierField plus(const FourierField& other, double t) const {
    if (other.n_ != n_) throw usage_error("field dimensions differ");
    FourierField out = *this;
    if (t == 0) return out;
    for (const auto& b : other.blocks_) {
      Block nb{b.ups, {}};
      for (const auto& c : b.comps) nb.comps.push_back(c.scaled(t));
      out.blocks_.push_back(std::move(nb));
    }
    return out;
  }

  /// phi * this, for a trigonometric phi.
  FourierField times(const TrigField& phi) const {
    if (phi.dim() != n_) throw usage_error("scalar field dimension differs");
    FourierField out = *this;
    for (auto& b : out.blocks_)
      for (auto& c : b.comps) c = c * phi;
    return out;
  }

  /// e^(2 ups) * this. Requires each block to carry no conformal factor yet.
  FourierField conformally_rescaled(const TrigField& ups) const {
    FourierField out = *this;
    for (auto& b : out.blocks_) b.ups = b.ups.empty() ? ups : b.ups + ups;
    return out;
  }

  friend bool operator==(const FourierField& x, const FourierField& y) {
    if (x.n_ != y.n_ || x.blocks_.size() != y.blocks_.size()) return false;
    for (std::size_t m = 0; m < x.blocks_.size(); ++m)
      if (!(x.blocks_[m].ups == y.blocks_[m].ups) || x.blocks_[m].comps != y.blocks_[m].comps) return false;
    return true;
  }

 private:
  int n_ = 0;
  std::vector<Block> blocks_;
};

/// Quadrature grid: resolution^n points y = origin + 2 pi m / resolution.
struct TorusGrid {
  int n = 0;
  int resolution = 0;
  std::vector<double> origin;

  long points() const {
    long p = 1;
    for (int i = 0; i < n; ++i) p *= resolution;
    return p;
  }
  std::vector<double> point(long index) const {
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = n - 1; i >= 0; --i) {
      const int m = static_cast<int>(index % resolution);
      index /= resolution;
      y[i] = (origin.empty() ? 0.0 : origin[i]) + 2 * std::numbers::pi * m / resolution;
    }
    return y;
  }
  double weight() const { return std::pow(2 * std::numbers::pi / resolution, n); }
};

/// (2K + 1) points per axis with K the largest wave number plus 2.
inline int default_resolution(const FourierField& f) { return 2 * (f.max_wave() + 2) + 1; }

/// Random trigonometric symmetric field: each component gets the axis waves
/// e_a and e_0 - e_1 with coefficients uniform in [-amplitude, amplitude],
/// plus the identity when `identity` is set.
inline FourierField random_fourier_field(int n, std::uint64_t seed, double amplitude, bool identity) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  return FourierField::from_components(n, [&](int i, int j) {
    TrigField f = identity && i == j ? TrigField::constant(n, 1) : TrigField(n);
    for (int a = 0; a < n; ++a) {
      std::vector<int> k(static_cast<std::size_t>(n), 0);
      k[a] = 1;
      const double c = u(rng), s = u(rng);
      f.add(k, c, s);
    }
    if (n >= 2) {
      std::vector<int> k(static_cast<std::size_t>(n), 0);
      k[0] = 1;
      k[1] = -1;
      const double c = u(rng), s = u(rng);
      f.add(k, c, s);
    }
    return f;
  });
}

struct QuadratureOptions {
  int resolution = 0;           // 0: default_resolution of the metric
  std::vector<double> origin;   // grid shift (empty: 0)
  int threads = 1;              // 0: hardware concurrency
};

namespace detail {

inline double min_eigenvalue(const std::vector<double>& a, int n) {
  Eigen::Map<const Eigen::MatrixXd> m(a.data(), n, n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Evaluates `f(y)` (a fixed-width vector) on every grid point and returns the
/// weighted sums. Per-point results are stored and reduced in index order, so
/// the result does not depend on the thread count.
template <class F>
std::vector<double> grid_sum(const TorusGrid& grid, int width, int threads, F&& f) {
  const long np = grid.points();
  std::vector<double> values(static_cast<std::size_t>(np) * width, 0.0);
  auto work = [&](long i) {
    const auto y = grid.point(i);
    const std::vector<double> r = f(y);
    if (static_cast<int>(r.size()) != width) throw usage_error("grid sampler returned the wrong width");
    std::copy(r.begin(), r.end(), values.begin() + i * width);
  };
  if (threads == 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (threads <= 1 || np < 2) {
    for (long i = 0; i < np; ++i) work(i);
  } else {
    std::atomic<long> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (long i; (i = next.fetch_add(1)) < np;) {
          try {
            work(i);
          } catch (...) {
            std::lock_guard lock(err_mu);
            if (!err) err = std::current_exception();
            next = np;
          }
        }
      });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }
  std::vector<double> sums(static_cast<std::size_t>(width), 0.0);
  for (long i = 0; i < np; ++i)
    for (int w = 0; w < width; ++w) sums[w] += values[i * width + w];
  for (auto& s : sums) s *= grid.weight();
  return sums;
}

inline double sqrt_det(const std::vector<double>& a, int n) {
  Eigen::Map<const Eigen::MatrixXd> m(a.data(), n, n);
  const double d = m.determinant();
  if (!(d > 0)) throw degenerate_metric("metric determinant is not positive");
  return std::sqrt(d);
}

}  // namespace detail

/// A positive definite FourierField, checked on a grid.
class FourierMetric {
 public:
  FourierMetric() = default;
  explicit FourierMetric(FourierField field, int check_resolution = 0) : field_(std::move(field)) {
    const int n = field_.dim();
    resolution_ = check_resolution > 0 ? check_resolution : default_resolution(field_);
    TorusGrid grid{n, resolution_, {}};
    margin_ = std::numeric_limits<double>::infinity();
    for (long i = 0; i < grid.points(); ++i)
      margin_ = std::min(margin_, detail::min_eigenvalue(field_.value(grid.point(i)), n));
    if (!(margin_ > 0))
      throw degenerate_metric("metric is not positive definite on the grid (minimum eigenvalue " +
                              shortest_decimal(margin_) + ")");
  }

  int dim() const { return field_.dim(); }
  const FourierField& field() const { return field_; }
  double positivity_margin() const { return margin_; }
  int checked_resolution() const { return resolution_; }

  MetricJet<Series<double>> jet(std::span<const double> p, int cap) const {
    return MetricJet<Series<double>>(field_.jet(p, cap));
  }
  std::vector<double> value(std::span<const double> p) const { return field_.value(p); }

 private:
  FourierField field_;
  double margin_ = 0;
  int resolution_ = 0;
};

namespace detail {

inline TorusGrid make_grid(const FourierField& f, const QuadratureOptions& opt, std::vector<std::string>* warnings) {
  TorusGrid grid{f.dim(), opt.resolution > 0 ? opt.resolution : default_resolution(f), opt.origin};
  if (!grid.origin.empty() && static_cast<int>(grid.origin.size()) != grid.n)
    throw usage_error("grid origin has the wrong dimension");
  if (grid.resolution < 2 * f.max_wave() + 1 && warnings)
    warnings->push_back("resolution " + std::to_string(grid.resolution) + " is below 2K+1 = " +
                        std::to_string(2 * f.max_wave() + 1) + "; integrands alias");
  return grid;
}

}  // namespace detail

/// Periodic trapezoid quadrature of f * sqrt(det g).
inline double integrate_torus(const std::function<double(std::span<const double>)>& f, const FourierMetric& g,
                              const QuadratureOptions& opt = {}, std::vector<std::string>* warnings = nullptr) {
  const auto grid = detail::make_grid(g.field(), opt, warnings);
  const int n = g.dim();
  return detail::grid_sum(grid, 1, opt.threads, [&](const std::vector<double>& y) {
    return std::vector<double>{f(y) * detail::sqrt_det(g.value(y), n)};
  })[0];
}

// ---------------------------------------------------------------------------
// Log coefficient and the Q integral

struct VolumeReport {
  int n = 0;
  int resolution = 0;
  /// integral of v^(2j) dv for j = 1..n/2; the last entry is L.
  std::vector<double> v_integrals;
  double volume = 0;
  double L = 0;
  double q_integral = 0;  // k_n L
  /// |L - L'| with L' from a grid two points coarser per axis (when requested).
  std::optional<double> error_estimate;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> volume_sample(const FourierMetric& g, std::span<const double> y) {
  const int n = g.dim();
  const auto jet = g.jet(y, n);
  const auto fg = fg_expand(jet);
  const auto v = volume_coeffs(fg, jet);
  const double w = sqrt_det(g.value(y), n);
  std::vector<double> out;
  out.push_back(w);
  for (int j = 2; j <= n; j += 2) out.push_back(v[j] * w);
  return out;
}

inline VolumeReport volume_on_grid(const FourierMetric& g, const QuadratureOptions& opt, std::vector<std::string>* w) {
  const int n = g.dim();
  const Constants k = constants(n);
  const auto grid = make_grid(g.field(), opt, w);
  const auto sums = grid_sum(grid, 1 + n / 2, opt.threads, [&](const std::vector<double>& y) { return volume_sample(g, y); });
  VolumeReport r;
  r.n = n;
  r.resolution = grid.resolution;
  r.volume = sums[0];
  r.v_integrals.assign(sums.begin() + 1, sums.end());
  r.L = r.v_integrals.back();
  r.q_integral = k.k.get_d() * r.L;
  return r;
}

}  // namespace detail

/// L = integral of v^(n) dv over the torus.
inline VolumeReport log_coefficient(const FourierMetric& g, const QuadratureOptions& opt = {},
                                    bool estimate_error = false) {
  std::vector<std::string> warnings;
  VolumeReport r = detail::volume_on_grid(g, opt, &warnings);
  if (estimate_error) {
    QuadratureOptions coarse = opt;
    coarse.resolution = r.resolution - 2;
    if (coarse.resolution >= 3) r.error_estimate = std::abs(r.L - detail::volume_on_grid(g, coarse, nullptr).L);
  }
  r.warnings = std::move(warnings);
  return r;
}

struct QReport {
  int n = 0;
  int resolution = 0;
  double L = 0;
  double from_log = 0;            // k_n L
  std::optional<double> from_q4;  // n = 4: integral of q4 dv
  std::optional<double> relative_difference;
  std::vector<std::string> warnings;
};

/// Integral of Q dv as k_n L; for n = 4 also by pointwise q4 quadrature.
inline QReport q_integral(const FourierMetric& g, const QuadratureOptions& opt = {}) {
  const int n = g.dim();
  QReport r;
  r.n = n;
  const auto grid = detail::make_grid(g.field(), opt, &r.warnings);
  r.resolution = grid.resolution;
  const bool two_path = n == 4;
  const auto sums = detail::grid_sum(grid, two_path ? 2 : 1, opt.threads, [&](const std::vector<double>& y) {
    const auto jet = g.jet(y, n);
    const auto fg = fg_expand(jet);
    const double w = detail::sqrt_det(g.value(y), n);
    std::vector<double> out{volume_coeffs(fg, jet)[n] * w};
    if (two_path) {
      CurvatureSuite<Series<double>> suite(jet);
      out.push_back(q4(suite).constant_term() * w);
    }
    return out;
  });
  r.L = sums[0];
  r.from_log = constants(n).k.get_d() * r.L;
  if (two_path) {
    r.from_q4 = sums[1];
    const double scale = std::max(std::abs(r.from_log), std::abs(*r.from_q4));
    r.relative_difference = scale == 0 ? 0.0 : std::abs(r.from_log - *r.from_q4) / scale;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Variation along g + t h

/// Sign used for the contravariant variation: gdot^ij = sign * g^ik g^jl h_kl.
/// The identities hold with raised_index (h with both indices raised); the
/// matrix-inverse derivative flips the sign of the pairing.
enum class VariationSign { inverse_derivative = -1, raised_index = 1 };

struct BoundaryFit {
  std::vector<double> eps;
  std::vector<double> values;   // the boundary integral at each eps
  double log_coefficient = 0;   // fitted coefficient of log(1/eps)
  double analytic = 0;          // read off the x^n log x term directly
  double fit_residual = 0;      // relative rms residual of the fit
  /// |coefficients of x^k log x| for k < n, which vanish in exact arithmetic.
  double spurious_log = 0;
  std::vector<std::string> warnings;
};

struct VariationReport {
  int n = 0;
  int resolution = 0;
  double t_step = 0;
  VariationSign sign = VariationSign::raised_index;
  /// d/dt of the Q integral (k_n L): Richardson value and the two central differences.
  double dq = 0, dq_h = 0, dq_2h = 0;
  std::optional<double> dq_q4;  // n = 4: same derivative through the q4 path
  double dL = 0;
  /// integral of O_ij gdot^ij dv
  double pairing = 0;
  double theorem_rhs = 0;       // (-1)^(n/2) (n - 2)/2 * pairing
  double two_n_c_dL = 0;        // 2 n c_n dL
  double theorem_discrepancy = 0;
  double volume_discrepancy = 0;
  std::optional<BoundaryFit> boundary;
  std::vector<std::string> warnings;
};

struct VariationOptions {
  QuadratureOptions quadrature;
  double t_step = 1e-3;
  VariationSign sign = VariationSign::raised_index;
  bool boundary = false;
  std::vector<double> eps;  // empty: geometric sweep 0.02 .. 0.3
};

namespace detail {

inline double rel_gap(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0 ? 0.0 : std::abs(a - b) / s;
}

/// (8 (f(h) - f(-h)) - (f(2h) - f(-2h))) / (12 h)
inline double richardson(double fm2, double fm1, double fp1, double fp2, double h) {
  return (8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * h);
}

/// Base-point data of one solved expansion.
struct PointExpansion {
  std::vector<std::vector<double>> G;  // G[k] = g^(k) at the point, row-major
  std::vector<double> r0;
  std::vector<double> O;
  double sqrt_det = 0;
  double vn = 0;
  double q4 = 0;
};

inline PointExpansion expand_at(const FourierField& f, std::span<const double> y, bool with_q4) {
  const int n = f.dim();
  const auto value = f.value(y);
  if (!(min_eigenvalue(value, n) > 0)) throw degenerate_metric("metric family loses positivity");
  const MetricJet<Series<double>> jet(f.jet(y, n));
  const auto fg = fg_expand(jet);
  PointExpansion p;
  auto base = [&](const TensorJet<Series<double>>& t) {
    std::vector<double> m(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m[i * n + j] = t({i, j}).constant_term();
    return m;
  };
  for (const auto& c : fg.coefficients) p.G.push_back(base(c));
  p.r0 = base(fg.log_coefficient);
  p.O = base(fg.obstruction);
  p.sqrt_det = sqrt_det(value, n);
  p.vn = volume_coeffs(fg, jet)[n];
  if (with_q4) {
    CurvatureSuite<Series<double>> suite(jet);
    p.q4 = q4(suite).constant_term();
  }
  return p;
}

/// x * I(x) * sqrt(det g_x / det g) for the boundary integrand
///   I = -1/2 g^ij g^kl g'_jl gdot_ik + x^-1 g^ij gdot_ij - (g^ij gdot_ij)'
/// as a univariate radial series through x^n. The regular and log
/// coefficients are returned concatenated (2 (n + 1) entries).
inline std::vector<double> boundary_density(const PointExpansion& base, const std::vector<std::vector<double>>& Gdot,
                                            const std::vector<double>& r0dot) {
  using RS = RadialSeries<double>;
  using R = Series<double>;
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(base.r0.size()))));
  const int cap = n;
  auto build = [&](const std::vector<std::vector<double>>& coeffs, const std::vector<double>& logc) {
    return TensorJet<RS>::generate(n, {Variance::Co, Variance::Co}, Symmetry::symmetric(0, 1), 1, cap,
                                   [&](const std::vector<int>& idx, RS& out) {
                                     R reg = R::zero(1, cap), lg = R::zero(1, cap);
                                     for (int k = 0; k <= n; ++k) reg[k] = coeffs[k][idx[0] * n + idx[1]];
                                     lg[n] = logc[idx[0] * n + idx[1]];
                                     out = RS(reg, lg);
                                   });
  };
  const auto gx = build(base.G, base.r0);
  const auto gdot = build(Gdot, r0dot);
  const auto ginv = inverse_metric(gx);
  auto at = [&](const TensorJet<RS>& t, int i, int j) { return t({i, j}); };

  // A = g^-1 g', B = g^-1 gdot (mixed, row-major)
  std::vector<RS> A(static_cast<std::size_t>(n * n), RS::zero(1, cap - 1)), B(static_cast<std::size_t>(n * n), RS::zero(1, cap));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const RS gik = at(ginv, i, k);
        A[i * n + j].add_mul(gik, at(gx, k, j).x_derivative());
        B[i * n + j].add_mul(gik, at(gdot, k, j));
      }
  RS trAB = RS::zero(1, cap - 1), trB = RS::zero(1, cap);
  for (int i = 0; i < n; ++i) {
    trB += B[i * n + i];
    for (int j = 0; j < n; ++j) trAB.add_mul(A[i * n + j], B[j * n + i]);
  }
  RS xi = trB;
  xi.add_scaled(trAB.times_x(), -0.5);
  xi.add_scaled(trB.x_derivative().times_x(), -1.0);

  std::vector<R> reg;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) reg.push_back(at(gx, i, j).regular());
  const R det = determinant(std::move(reg), n);
  const R dens = sqrt(det * (1.0 / det.constant_term())) * base.sqrt_det;
  const RS total = xi * RS(dens);
  std::vector<double> out(static_cast<std::size_t>(2 * (n + 1)));
  for (int k = 0; k <= n; ++k) {
    out[k] = total.regular()[k];
    out[n + 1 + k] = total.log_part()[k];
  }
  return out;
}

/// Boundary integral (eps^(1-n) / 2n) * integral of I dv_{g_eps} from the
/// integrated coefficients of x I dv, and the log(1/eps) fit across the sweep.
inline BoundaryFit fit_boundary(int n, const std::vector<double>& coeffs, std::vector<double> eps) {
  BoundaryFit fit;
  if (eps.empty())
    for (int i = 0; i < 12; ++i) eps.push_back(0.02 * std::pow(15.0, i / 11.0));
  if (eps.size() < static_cast<std::size_t>(n + 2))
    throw usage_error("eps sweep needs at least n + 2 values");
  for (double e : eps)
    if (!(e > 0)) throw usage_error("eps values must be positive");
  fit.eps = eps;
  auto boundary_value = [&](double e) {
    double s = 0;
    for (int k = 0; k <= n; ++k) s += (coeffs[k] + coeffs[n + 1 + k] * std::log(e)) * std::pow(e, k);
    return s * std::pow(e, -n) / (2 * n);
  };
  // eps^n B(eps) = sum_{k<=n} alpha_k eps^k + beta eps^n log(1/eps)
  const int m = static_cast<int>(eps.size());
  Eigen::MatrixXd a(m, n + 2);
  Eigen::VectorXd rhs(m);
  for (int r = 0; r < m; ++r) {
    const double e = eps[r];
    fit.values.push_back(boundary_value(e));
    for (int k = 0; k <= n; ++k) a(r, k) = std::pow(e, k);
    a(r, n + 1) = std::pow(e, n) * std::log(1 / e);
    rhs(r) = std::pow(e, n) * fit.values.back();
  }
  const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(rhs);
  fit.log_coefficient = sol(n + 1);
  fit.fit_residual = rhs.norm() == 0 ? 0.0 : (a * sol - rhs).norm() / rhs.norm();
  fit.analytic = -coeffs[2 * n + 1] / (2 * n);
  for (int k = 0; k < n; ++k) fit.spurious_log = std::max(fit.spurious_log, std::abs(coeffs[n + 1 + k]));
  if (*std::max_element(eps.begin(), eps.end()) >= 0.5)
    fit.warnings.push_back("eps sweep reaches 0.5 or more; outside the asymptotic regime of the expansion");
  if (fit.fit_residual > 1e-6)
    fit.warnings.push_back("poor log fit (relative residual " + shortest_decimal(fit.fit_residual) + ")");
  return fit;
}

}  // namespace detail

/// Theorem check along g + t h: finite-difference derivative of the Q integral
/// versus the obstruction pairing, plus the volume form 2 n c_n dL and,
/// optionally, the boundary-integral log fit.
inline VariationReport variation_check(const FourierMetric& g, const FourierField& h, const VariationOptions& opt = {}) {
  const int n = g.dim();
  if (h.dim() != n) throw usage_error("perturbation dimension differs from the metric");
  if (!(opt.t_step > 0)) throw usage_error("t step must be positive");
  const Constants k = constants(n);
  VariationReport r;
  r.n = n;
  r.t_step = opt.t_step;
  r.sign = opt.sign;

  const double ts[4] = {-2 * opt.t_step, -opt.t_step, opt.t_step, 2 * opt.t_step};
  std::vector<FourierField> family;
  for (double t : ts) family.push_back(g.field().plus(h, t));
  // grid resolved for the perturbed family
  const auto grid = detail::make_grid(g.field().plus(h, 1.0), opt.quadrature, &r.warnings);
  r.resolution = grid.resolution;
  const bool with_q4 = n == 4;
  const double sgn = static_cast<double>(static_cast<int>(opt.sign));

  // layout: vn*w (4 values), q4*w (4), pairing, boundary coefficients
  const int nb = opt.boundary ? 2 * (n + 1) : 0;
  const int width = 9 + nb;
  const auto sums = detail::grid_sum(grid, width, opt.quadrature.threads, [&](const std::vector<double>& y) {
    std::vector<double> out(static_cast<std::size_t>(width), 0.0);
    std::vector<detail::PointExpansion> pe;
    for (int s = 0; s < 4; ++s) {
      pe.push_back(detail::expand_at(family[s], y, with_q4));
      out[s] = pe.back().vn * pe.back().sqrt_det;
      out[4 + s] = pe.back().q4 * pe.back().sqrt_det;
    }
    const auto p0 = detail::expand_at(g.field(), y, false);
    const auto hv = h.value(y);
    // O_ij gdot^ij with gdot^ij = sgn g^ik g^jl h_kl
    Eigen::Map<const Eigen::MatrixXd> G0(p0.G[0].data(), n, n), H(hv.data(), n, n), O(p0.O.data(), n, n);
    const Eigen::MatrixXd gi = G0.inverse();
    out[8] = sgn * (O.cwiseProduct(gi * H * gi)).sum() * p0.sqrt_det;
    if (opt.boundary) {
      std::vector<std::vector<double>> gdot(static_cast<std::size_t>(n + 1));
      for (int kk = 0; kk <= n; ++kk) {
        gdot[kk].resize(static_cast<std::size_t>(n * n));
        for (int e = 0; e < n * n; ++e)
          gdot[kk][e] = detail::richardson(pe[0].G[kk][e], pe[1].G[kk][e], pe[2].G[kk][e], pe[3].G[kk][e], opt.t_step);
      }
      std::vector<double> r0dot(static_cast<std::size_t>(n * n));
      for (int e = 0; e < n * n; ++e)
        r0dot[e] = detail::richardson(pe[0].r0[e], pe[1].r0[e], pe[2].r0[e], pe[3].r0[e], opt.t_step);
      gdot[0] = hv;  // exact
      const auto b = detail::boundary_density(p0, gdot, r0dot);
      std::copy(b.begin(), b.end(), out.begin() + 9);
    }
    return out;
  });

  const double kn = k.k.get_d(), cn = k.c.get_d();
  r.dL = detail::richardson(sums[0], sums[1], sums[2], sums[3], opt.t_step);
  r.dq = kn * r.dL;
  r.dq_h = kn * (sums[2] - sums[1]) / (2 * opt.t_step);
  r.dq_2h = kn * (sums[3] - sums[0]) / (4 * opt.t_step);
  if (with_q4) r.dq_q4 = detail::richardson(sums[4], sums[5], sums[6], sums[7], opt.t_step);
  r.pairing = sums[8];
  r.theorem_rhs = ((n / 2) % 2 ? -1.0 : 1.0) * (n - 2) / 2.0 * r.pairing;
  r.two_n_c_dL = 2 * n * cn * r.dL;
  r.theorem_discrepancy = detail::rel_gap(r.dq, r.theorem_rhs);
  r.volume_discrepancy = detail::rel_gap(r.two_n_c_dL, r.pairing);
  if (opt.boundary) {
    std::vector<double> coeffs(sums.begin() + 9, sums.end());
    r.boundary = detail::fit_boundary(n, coeffs, opt.eps);
  }
  return r;
}

/// Log(1/eps) coefficient of the boundary integral for the variation h, fitted
/// across the eps sweep. Equals dL when the identities hold.
inline BoundaryFit boundary_variation(const FourierMetric& g, const FourierField& h, VariationOptions opt = {}) {
  opt.boundary = true;
  auto r = variation_check(g, h, opt);
  auto fit = std::move(*r.boundary);
  fit.warnings.insert(fit.warnings.end(), r.warnings.begin(), r.warnings.end());
  return fit;
}

}  // namespace confjet
