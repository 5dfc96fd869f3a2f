#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "confjet/builtin.hpp"
#include "confjet/curvature.hpp"
#include "confjet/fg.hpp"
#include "confjet/volume.hpp"

namespace confjet::cli {

using json = nlohmann::ordered_json;

enum ExitCode { ok = 0, validation = 1, numerical = 2, check_failed = 3 };

/// Spec validation failure with the offending field path.
class spec_error : public usage_error {
 public:
  spec_error(const std::string& path, const std::string& what) : usage_error(path + ": " + what) {}
};

// ---------------------------------------------------------------------------
// Metric specs

struct JetTerm {
  std::vector<int> exponents;
  Rational value;
  bool operator==(const JetTerm& o) const { return exponents == o.exponents && value == o.value; }
};

struct WaveTerm {
  std::vector<int> k;
  double cos = 0;
  double sin = 0;
  bool operator==(const WaveTerm&) const = default;
};

template <class T>
struct Component {
  int i = 0, j = 0;
  std::vector<T> terms;
  bool operator==(const Component&) const = default;
};

/// Parsed metric spec. kind is "jet", "fourier" or "builtin"; perturbation
/// files may also use "conformal" (h = phi g, phi in `conformal`).
struct MetricSpec {
  std::string kind;
  int dimension = 0;
  std::string backend = "rational";
  std::optional<int> degree;
  std::vector<Component<JetTerm>> jet;
  std::vector<Component<WaveTerm>> fourier;
  std::vector<WaveTerm> conformal;  // fourier: Upsilon of e^(2 Upsilon); conformal: phi
  std::string name;                 // builtin
  json params = json::object();     // builtin

  bool operator==(const MetricSpec& o) const {
    return kind == o.kind && dimension == o.dimension && backend == o.backend && degree == o.degree &&
           jet == o.jet && fourier == o.fourier && conformal == o.conformal && name == o.name && params == o.params;
  }
};

namespace detail {

inline const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw spec_error(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw spec_error(path + "." + key, "missing field");
  return *it;
}

inline int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw spec_error(path, "expected an integer");
  return v.get<int>();
}

/// Exact value from an integer, a decimal number, or a "p/q" / decimal string.
inline Rational as_rational(const json& v, const std::string& path) {
  try {
    if (v.is_number_integer()) return Rational(v.get<long>());
    if (v.is_number_float()) return parse_rational(shortest_decimal(v.get<double>()));
    if (v.is_string()) return parse_rational(v.get<std::string>());
  } catch (const usage_error& e) {
    throw spec_error(path, e.what());
  }
  throw spec_error(path, "expected a number or a \"p/q\" string");
}

inline double as_double(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find('/') != std::string::npos) return as_rational(v, path).get_d();
    try {
      std::size_t used = 0;
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw spec_error(path, "expected a number");
}

inline std::vector<int> int_vector(const json& v, int n, const std::string& path, bool nonneg) {
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw spec_error(path, "expected an array of " + std::to_string(n) + " integers");
  std::vector<int> out;
  for (std::size_t a = 0; a < v.size(); ++a) {
    const int x = as_int(v[a], path + "[" + std::to_string(a) + "]");
    if (nonneg && x < 0) throw spec_error(path + "[" + std::to_string(a) + "]", "exponent must be nonnegative");
    out.push_back(x);
  }
  return out;
}

inline std::vector<WaveTerm> wave_terms(const json& v, int n, const std::string& path) {
  if (!v.is_array()) throw spec_error(path, "expected an array of terms");
  std::vector<WaveTerm> out;
  for (std::size_t t = 0; t < v.size(); ++t) {
    const std::string p = path + "[" + std::to_string(t) + "]";
    WaveTerm w;
    w.k = int_vector(field(v[t], "k", p), n, p + ".k", false);
    if (v[t].contains("cos")) w.cos = as_double(v[t]["cos"], p + ".cos");
    if (v[t].contains("sin")) w.sin = as_double(v[t]["sin"], p + ".sin");
    out.push_back(std::move(w));
  }
  return out;
}

template <class T, class F>
std::vector<Component<T>> components(const json& v, int n, const std::string& path, F&& parse_terms) {
  if (!v.is_array()) throw spec_error(path, "expected an array of components");
  std::vector<Component<T>> out;
  std::vector<bool> seen(static_cast<std::size_t>(n * n), false);
  for (std::size_t c = 0; c < v.size(); ++c) {
    const std::string p = path + "[" + std::to_string(c) + "]";
    Component<T> comp;
    comp.i = as_int(field(v[c], "i", p), p + ".i");
    comp.j = as_int(field(v[c], "j", p), p + ".j");
    if (comp.i < 0 || comp.i >= n) throw spec_error(p + ".i", "index out of range");
    if (comp.j < 0 || comp.j >= n) throw spec_error(p + ".j", "index out of range");
    if (seen[comp.i * n + comp.j] || seen[comp.j * n + comp.i])
      throw spec_error(p, "component (" + std::to_string(comp.i) + "," + std::to_string(comp.j) +
                              ") given twice (the metric is symmetric; give i <= j once)");
    seen[comp.i * n + comp.j] = true;
    comp.terms = parse_terms(field(v[c], "terms", p), p + ".terms");
    out.push_back(std::move(comp));
  }
  return out;
}

inline std::vector<JetTerm> jet_terms(const json& v, int n, const std::string& path) {
  if (!v.is_array()) throw spec_error(path, "expected an array of terms");
  std::vector<JetTerm> out;
  for (std::size_t t = 0; t < v.size(); ++t) {
    const std::string p = path + "[" + std::to_string(t) + "]";
    JetTerm term;
    term.exponents = int_vector(field(v[t], "exponents", p), n, p + ".exponents", true);
    term.value = as_rational(field(v[t], "value", p), p + ".value");
    out.push_back(std::move(term));
  }
  return out;
}

inline void check_builtin_params(const MetricSpec& s) {
  const std::string p = "spec.params";
  const int n = s.dimension;
  if (s.name == "flat") return;
  if (s.name == "sphere") {
    as_rational(field(s.params, "lambda", p), p + ".lambda");
    return;
  }
  if (s.name == "conformally-flat") {
    jet_terms(field(s.params, "upsilon", p), n, p + ".upsilon");
    return;
  }
  if (s.name == "product") {
    const auto& f = field(s.params, "factors", p);
    if (!f.is_array() || f.empty()) throw spec_error(p + ".factors", "expected a nonempty array");
    int total = 0;
    for (std::size_t a = 0; a < f.size(); ++a) {
      const std::string q = p + ".factors[" + std::to_string(a) + "]";
      const int d = as_int(field(f[a], "dimension", q), q + ".dimension");
      if (d < 1) throw spec_error(q + ".dimension", "must be positive");
      as_rational(field(f[a], "lambda", q), q + ".lambda");
      total += d;
    }
    if (total != n) throw spec_error(p + ".factors", "factor dimensions sum to " + std::to_string(total));
    return;
  }
  if (s.name == "random" || s.name == "random-torus") {
    if (s.params.contains("seed") && !s.params["seed"].is_number_unsigned())
      throw spec_error(p + ".seed", "expected a nonnegative integer");
    if (s.params.contains("density")) {
      const double d = as_double(s.params["density"], p + ".density");
      if (!(d >= 0 && d <= 1)) throw spec_error(p + ".density", "must lie in [0, 1]");
    }
    if (s.params.contains("amplitude")) as_double(s.params["amplitude"], p + ".amplitude");
    return;
  }
  throw spec_error("spec.name",
                   "unknown builtin '" + s.name + "' (flat, sphere, conformally-flat, product, random, random-torus)");
}

}  // namespace detail

inline MetricSpec parse_spec(const json& j, const std::string& root = "spec") {
  using namespace detail;
  MetricSpec s;
  const auto& kind = field(j, "kind", root);
  if (!kind.is_string()) throw spec_error(root + ".kind", "expected a string");
  s.kind = kind.get<std::string>();
  s.dimension = as_int(field(j, "dimension", root), root + ".dimension");
  if (s.dimension < 1 || s.dimension > 12) throw spec_error(root + ".dimension", "must lie in 1..12");
  const int n = s.dimension;
  if (j.contains("backend")) {
    if (!j["backend"].is_string()) throw spec_error(root + ".backend", "expected a string");
    s.backend = j["backend"].get<std::string>();
    if (s.backend != "rational" && s.backend != "float")
      throw spec_error(root + ".backend", "must be \"rational\" or \"float\"");
  }
  if (j.contains("degree")) {
    s.degree = as_int(j["degree"], root + ".degree");
    if (*s.degree < 0) throw spec_error(root + ".degree", "must be nonnegative");
  }
  if (s.kind == "jet") {
    if (!s.degree) throw spec_error(root + ".degree", "missing field (jets need a degree cap)");
    s.jet = components<JetTerm>(field(j, "components", root), n, root + ".components",
                                [&](const json& v, const std::string& p) { return jet_terms(v, n, p); });
    for (std::size_t c = 0; c < s.jet.size(); ++c)
      for (std::size_t t = 0; t < s.jet[c].terms.size(); ++t) {
        int deg = 0;
        for (int e : s.jet[c].terms[t].exponents) deg += e;
        if (deg > *s.degree)
          throw spec_error(root + ".components[" + std::to_string(c) + "].terms[" + std::to_string(t) + "].exponents",
                           "total degree " + std::to_string(deg) + " exceeds the degree cap");
      }
  } else if (s.kind == "fourier") {
    s.fourier = components<WaveTerm>(field(j, "components", root), n, root + ".components",
                                     [&](const json& v, const std::string& p) { return wave_terms(v, n, p); });
    if (j.contains("conformal")) s.conformal = wave_terms(j["conformal"], n, root + ".conformal");
  } else if (s.kind == "builtin") {
    const auto& name = field(j, "name", root);
    if (!name.is_string()) throw spec_error(root + ".name", "expected a string");
    s.name = name.get<std::string>();
    if (j.contains("params")) {
      if (!j["params"].is_object()) throw spec_error(root + ".params", "expected an object");
      s.params = j["params"];
    }
    check_builtin_params(s);
  } else if (s.kind == "conformal") {
    s.conformal = wave_terms(field(j, "phi", root), n, root + ".phi");
  } else {
    throw spec_error(root + ".kind", "unknown kind '" + s.kind + "' (jet, fourier, builtin)");
  }
  return s;
}

inline json to_json(const MetricSpec& s) {
  auto waves = [](const std::vector<WaveTerm>& ts) {
    json a = json::array();
    for (const auto& t : ts) a.push_back({{"k", t.k}, {"cos", t.cos}, {"sin", t.sin}});
    return a;
  };
  json j;
  j["kind"] = s.kind;
  j["dimension"] = s.dimension;
  j["backend"] = s.backend;
  if (s.degree) j["degree"] = *s.degree;
  if (s.kind == "jet") {
    json comps = json::array();
    for (const auto& c : s.jet) {
      json terms = json::array();
      for (const auto& t : c.terms) terms.push_back({{"exponents", t.exponents}, {"value", t.value.get_str()}});
      comps.push_back({{"i", c.i}, {"j", c.j}, {"terms", terms}});
    }
    j["components"] = comps;
  } else if (s.kind == "fourier") {
    json comps = json::array();
    for (const auto& c : s.fourier) comps.push_back({{"i", c.i}, {"j", c.j}, {"terms", waves(c.terms)}});
    j["components"] = comps;
    if (!s.conformal.empty()) j["conformal"] = waves(s.conformal);
  } else if (s.kind == "builtin") {
    j["name"] = s.name;
    j["params"] = s.params;
  } else if (s.kind == "conformal") {
    j["phi"] = waves(s.conformal);
  }
  return j;
}

inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports the byte offset; translate it to a line and column
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size() + 1) - 1 && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw spec_error(source + ":" + std::to_string(line) + ":" + std::to_string(col), "malformed JSON");
  }
}

inline MetricSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw spec_error(path, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(parse_json_text(ss.str(), path));
}

// ---------------------------------------------------------------------------
// Building metrics

namespace detail {

inline TrigField trig_field(int n, const std::vector<WaveTerm>& ts) {
  TrigField f(n);
  for (const auto& t : ts) f.add(t.k, t.cos, t.sin);
  return f;
}

template <class S>
Series<S> jet_series(int n, int cap, const std::vector<JetTerm>& ts) {
  auto s = Series<S>::zero(n, cap);
  for (const auto& t : ts) {
    int deg = 0;
    for (int e : t.exponents) deg += e;
    if (deg > cap) continue;
    s.set_coefficient(t.exponents, s.coefficient(std::span<const int>(t.exponents)) +
                                       ScalarTraits<S>::from_rational(t.value));
  }
  return s;
}

inline std::uint64_t seed_of(const MetricSpec& s, std::optional<std::uint64_t> override_seed) {
  if (override_seed) return *override_seed;
  return s.params.contains("seed") ? s.params["seed"].get<std::uint64_t>() : 1;
}

}  // namespace detail

/// True when the spec describes a torus metric rather than a jet.
inline bool is_torus(const MetricSpec& s) {
  return s.kind == "fourier" || (s.kind == "builtin" && s.name == "random-torus");
}

inline FourierField fourier_field(const MetricSpec& s, std::optional<std::uint64_t> seed = {}) {
  const int n = s.dimension;
  if (s.kind == "builtin" && s.name == "random-torus") {
    const double amp = s.params.contains("amplitude") ? detail::as_double(s.params["amplitude"], "spec.params.amplitude") : 0.03;
    return random_fourier_field(n, detail::seed_of(s, seed), amp, true);
  }
  if (s.kind != "fourier") throw spec_error("spec.kind", "a torus metric needs kind \"fourier\"");
  auto f = FourierField::from_components(n, [&](int i, int j) {
    for (const auto& c : s.fourier)
      if ((c.i == i && c.j == j) || (c.i == j && c.j == i)) return detail::trig_field(n, c.terms);
    return TrigField(n);
  });
  if (!s.conformal.empty()) f = f.conformally_rescaled(detail::trig_field(n, s.conformal));
  return f;
}

/// Jet at the chart origin (y = 0 for torus metrics).
template <class S>
MetricJet<Series<S>> metric_jet(const MetricSpec& s, int cap, std::optional<std::uint64_t> seed = {}) {
  const int n = s.dimension;
  if (is_torus(s)) {
    if constexpr (std::is_same_v<S, double>) {
      const std::vector<double> origin(static_cast<std::size_t>(n), 0.0);
      return MetricJet<Series<double>>(fourier_field(s, seed).jet(origin, cap));
    } else {
      throw spec_error("spec.backend", "torus metrics use the float backend");
    }
  }
  if (s.kind == "jet") {
    return MetricJet<Series<S>>::from_components(n, n, cap, [&](int i, int j) {
      for (const auto& c : s.jet)
        if ((c.i == i && c.j == j) || (c.i == j && c.j == i)) return detail::jet_series<S>(n, cap, c.terms);
      return Series<S>::zero(n, cap);
    });
  }
  if (s.kind != "builtin") throw spec_error("spec.kind", "kind '" + s.kind + "' does not describe a metric");
  const auto& p = s.params;
  if (s.name == "flat") return builtin::flat<S>(n, cap);
  if (s.name == "sphere") {
    const Rational lambda = detail::as_rational(p["lambda"], "spec.params.lambda");
    return builtin::sphere_normal<S>(n, cap, ScalarTraits<S>::from_rational(Rational(4 * lambda)));
  }
  if (s.name == "conformally-flat") {
    const auto ups = detail::jet_series<S>(n, cap, detail::jet_terms(p["upsilon"], n, "spec.params.upsilon"));
    return builtin::conformally_flat<S>(ups, n);
  }
  if (s.name == "product") {
    std::vector<std::pair<int, S>> factors;
    for (const auto& f : p["factors"])
      factors.emplace_back(f["dimension"].get<int>(),
                           ScalarTraits<S>::from_rational(Rational(4 * detail::as_rational(f["lambda"], "lambda"))));
    return builtin::sphere_product<S>(factors, cap);
  }
  if (s.name == "random") {
    const double density = p.contains("density") ? detail::as_double(p["density"], "spec.params.density") : 1.0;
    return builtin::random_metric<S>(n, cap, detail::seed_of(s, seed), density);
  }
  throw spec_error("spec.name", "unknown builtin '" + s.name + "'");
}

// ---------------------------------------------------------------------------
// Reports

inline json value_json(const Rational& v) { return v.get_str(); }
inline json value_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Base-point values of a tensor jet as nested arrays (index order = array nesting).
template <class R>
json tensor_json(const TensorJet<R>& t) {
  const int n = t.dim(), rank = t.rank();
  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  std::function<json(int)> rec = [&](int slot) -> json {
    if (slot == rank) return value_json(t.at(idx).constant_term());
    json a = json::array();
    for (int i = 0; i < n; ++i) {
      idx[slot] = i;
      a.push_back(rec(slot + 1));
    }
    return a;
  };
  return rec(0);
}

inline json conventions(int n, VariationSign sign = VariationSign::raised_index) {
  json c;
  c["riemann"] = "R_abcd with Ric_bd = g^ac R_abcd; round spheres have positive curvature";
  c["covariant_derivative_slots"] = "appended: T_{...,a}";
  c["variation"] = sign == VariationSign::raised_index ? "gdot^ij = +g^ik g^jl h_kl" : "gdot^ij = -g^ik g^jl h_kl";
  if (n >= 4 && n % 2 == 0) {
    const auto k = constants(n);
    c["c_n"] = k.c.get_str();
    c["k_n"] = k.k.get_str();
  } else {
    c["c_n"] = nullptr;
    c["k_n"] = nullptr;
  }
  return c;
}

/// Common options shared by all subcommands.
struct Options {
  std::string spec_path;
  std::string backend;  // empty: from the spec
  std::optional<int> degree;
  int grid = 0;
  std::optional<double> tol;
  double dt = 1e-3;
  bool table = false;
  std::optional<std::uint64_t> seed;
  std::string path = "both";
  std::optional<int> order;
  std::string perturbation;
  bool boundary = false;
  std::string variation_sign = "plus";
  int threads = 1;
  bool error_estimate = false;
};

struct Outcome {
  json report;
  int code = ok;
};

namespace detail {

inline json header(const std::string& cmd, const MetricSpec& s, const std::string& backend) {
  json r;
  r["command"] = cmd;
  r["dimension"] = s.dimension;
  r["backend"] = backend;
  return r;
}

inline std::string backend_of(const MetricSpec& s, const Options& o) {
  std::string b = o.backend.empty() ? s.backend : o.backend;
  if (b != "rational" && b != "float") throw usage_error("--backend must be rational or float");
  if (is_torus(s)) b = "float";
  return b;
}

inline int degree_of(const MetricSpec& s, const Options& o, int fallback) {
  if (o.degree) return *o.degree;
  if (s.degree) return *s.degree;
  return fallback;
}

template <class S>
json report_suite(const MetricSpec& s, int cap, const Options& o, json r) {
  const auto g = metric_jet<S>(s, cap, o.seed);
  CurvatureSuite<Series<S>> suite(g);
  r["degree"] = cap;
  r["conventions"] = conventions(s.dimension);
  r["metric"] = tensor_json(g.g());
  const int n = s.dimension;
  if (cap >= 2) {
    r["riemann"] = tensor_json(suite.riemann());
    r["ricci"] = tensor_json(suite.ricci());
    r["scalar"] = value_json(suite.scalar().constant_term());
    if (n >= 3) {
      r["schouten"] = tensor_json(suite.schouten());
      r["weyl"] = tensor_json(suite.weyl());
    }
  }
  if (cap >= 3 && n >= 3) r["cotton"] = tensor_json(suite.cotton());
  if (cap >= 4 && n >= 3) r["bach"] = tensor_json(suite.bach());
  json warnings = json::array();
  if (n == 4 && cap >= 2) {
    try {
      const auto [wp, wm] = weyl_selfdual_split(suite, 1);
      r["weyl_self_dual"] = tensor_json(wp);
      r["weyl_anti_self_dual"] = tensor_json(wm);
    } catch (const usage_error& e) {
      warnings.push_back(std::string("self-dual split skipped: ") + e.what());
    }
  }
  if (n == 4 && cap >= 4) r["q_curvature"] = value_json(q4(suite).constant_term());
  if (cap < 4) warnings.push_back("degree cap " + std::to_string(cap) + " omits tensors needing more derivatives");
  r["warnings"] = warnings;
  return r;
}

template <class S>
bool tensors_equal(const TensorJet<Series<S>>& a, const TensorJet<Series<S>>& b, double tol) {
  const int n = a.dim();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const S x = a({i, j}).constant_term(), y = b({i, j}).constant_term();
      if constexpr (ScalarTraits<S>::exact) {
        if (x != y) return false;
      } else {
        if (std::abs(x - y) > tol * std::max(1.0, std::max(std::abs(x), std::abs(y)))) return false;
      }
    }
  return true;
}

template <class S>
Outcome obstruction_cmd(const MetricSpec& s, const Options& o, json r) {
  const int n = s.dimension;
  if (n % 2 || n < 4) throw usage_error("obstruction needs even n >= 4, got " + std::to_string(n));
  if (o.path != "fg" && o.path != "closed" && o.path != "both") throw usage_error("--path must be fg, closed or both");
  const int cap = degree_of(s, o, n);
  const auto g = metric_jet<S>(s, cap, o.seed);
  r["degree"] = cap;
  r["conventions"] = conventions(n);
  r["path"] = o.path;
  Outcome out;
  std::optional<TensorJet<Series<S>>> fg, closed;
  if (o.path != "closed") {
    fg = obstruction_fg(g);
    r["obstruction_fg"] = tensor_json(*fg);
  }
  if (o.path != "fg") {
    CurvatureSuite<Series<S>> suite(g);
    closed = obstruction_closed_form(suite);
    r["obstruction_closed"] = tensor_json(*closed);
  }
  if (fg && closed) {
    const double tol = o.tol.value_or(1e-10);
    const bool eq = tensors_equal(*fg, *closed, tol);
    r["equal"] = eq;
    if (!ScalarTraits<S>::exact) r["tolerance"] = tol;
    if (!eq) out.code = check_failed;
  }
  out.report = std::move(r);
  return out;
}

template <class S>
json matrix_json(const TensorJet<Series<S>>& t) {
  return tensor_json(t);
}

template <class S>
json fg_cmd(const MetricSpec& s, const Options& o, json r) {
  const int n = s.dimension;
  const int order = o.order.value_or(n);
  const int cap = degree_of(s, o, order);
  const auto g = metric_jet<S>(s, cap, o.seed);
  const auto fg = fg_expand(g, order);
  r["degree"] = cap;
  r["conventions"] = conventions(n);
  r["order"] = order;
  json coeffs = json::array();
  for (int k = 0; k <= order; ++k) coeffs.push_back({{"order", k}, {"value", tensor_json(fg.coefficients[k])}});
  r["coefficients"] = coeffs;
  if (fg.complete()) {
    r["obstruction"] = tensor_json(fg.obstruction);
    r["log_coefficient"] = tensor_json(fg.log_coefficient);
    r["trace_n"] = value_json(fg.trace_n.constant_term());
  }
  return r;
}

template <class S>
json volume_jet_cmd(const MetricSpec& s, const Options& o, json r) {
  const int n = s.dimension;
  const int cap = degree_of(s, o, n);
  const auto g = metric_jet<S>(s, cap, o.seed);
  const auto fg = fg_expand(g);
  const auto v = volume_coeffs(fg, g);
  r["degree"] = cap;
  r["conventions"] = conventions(n);
  json vj;
  for (int k = 2; k <= n; k += 2) vj[std::to_string(k)] = value_json(v[k]);
  r["v"] = vj;
  r["determinant_log_term"] = value_json(determinant_log_term(fg, g));
  return r;
}

inline QuadratureOptions quadrature(const Options& o) {
  QuadratureOptions q;
  q.resolution = o.grid;
  q.threads = o.threads;
  return q;
}

inline json warnings_json(const std::vector<std::string>& w) {
  json a = json::array();
  for (const auto& s : w) a.push_back(s);
  return a;
}

/// Volume of the round n-sphere of sectional curvature kappa.
inline double sphere_volume(int n, double kappa) {
  return 2 * std::pow(std::numbers::pi, (n + 1) / 2.0) / std::tgamma((n + 1) / 2.0) * std::pow(kappa, -n / 2.0);
}

}  // namespace detail

inline Outcome run_command(const std::string& cmd, const Options& o) {
  const MetricSpec s = load_spec(o.spec_path);
  const std::string backend = detail::backend_of(s, o);
  const bool exact = backend == "rational";
  json r = detail::header(cmd, s, backend);
  const int n = s.dimension;
  Outcome out;

  if (cmd == "report") {
    const int cap = detail::degree_of(s, o, 4);
    out.report = exact ? detail::report_suite<Rational>(s, cap, o, r) : detail::report_suite<double>(s, cap, o, r);
    return out;
  }
  if (cmd == "obstruction") return exact ? detail::obstruction_cmd<Rational>(s, o, r) : detail::obstruction_cmd<double>(s, o, r);
  if (cmd == "fg-expand") {
    out.report = exact ? detail::fg_cmd<Rational>(s, o, r) : detail::fg_cmd<double>(s, o, r);
    return out;
  }
  if (cmd == "volume") {
    if (!is_torus(s)) {
      out.report = exact ? detail::volume_jet_cmd<Rational>(s, o, r) : detail::volume_jet_cmd<double>(s, o, r);
      return out;
    }
    const FourierMetric g(fourier_field(s, o.seed));
    const auto v = log_coefficient(g, detail::quadrature(o), o.error_estimate);
    r["conventions"] = conventions(n);
    r["resolution"] = v.resolution;
    json vi;
    for (std::size_t j = 0; j < v.v_integrals.size(); ++j) vi[std::to_string(2 * (j + 1))] = v.v_integrals[j];
    r["v_integrals"] = vi;
    r["volume"] = v.volume;
    r["L"] = v.L;
    r["q_integral"] = v.q_integral;
    r["error_estimate"] = v.error_estimate ? json(*v.error_estimate) : json(nullptr);
    r["positivity_margin"] = g.positivity_margin();
    r["warnings"] = detail::warnings_json(v.warnings);
    out.report = r;
    return out;
  }
  if (cmd == "q-check") {
    r["conventions"] = conventions(n);
    const double tol = o.tol.value_or(1e-6);
    r["tolerance"] = tol;
    if (s.kind == "builtin" && s.name == "sphere") {
      // closed form: v^(n) of the Einstein solution times the sphere volume
      const Rational lambda = detail::as_rational(s.params["lambda"], "spec.params.lambda");
      if (sgn(lambda) <= 0) throw usage_error("sphere closed form needs lambda > 0");
      const auto g = metric_jet<Rational>(s, n, o.seed);
      const auto v = volume_coeffs(fg_expand(g), g);
      const double vol = detail::sphere_volume(n, 4 * lambda.get_d());
      const double L = v[n].get_d() * vol;
      r["path"] = "closed-form sphere";
      r["volume"] = vol;
      r["L"] = L;
      r["from_log"] = constants(n).k.get_d() * L;
      if (n == 4) {
        CurvatureSuite<Series<Rational>> suite(g);
        const double q = q4(suite).constant_term().get_d() * vol;
        r["from_q4"] = q;
        const double gap = confjet::detail::rel_gap(q, constants(n).k.get_d() * L);
        r["relative_difference"] = gap;
        if (gap > tol) out.code = check_failed;
      }
      out.report = r;
      return out;
    }
    if (!is_torus(s)) throw usage_error("q-check needs a torus metric (kind fourier) or the sphere builtin");
    const FourierMetric g(fourier_field(s, o.seed));
    const auto q = q_integral(g, detail::quadrature(o));
    r["path"] = "torus quadrature";
    r["resolution"] = q.resolution;
    r["L"] = q.L;
    r["from_log"] = q.from_log;
    r["from_q4"] = q.from_q4 ? json(*q.from_q4) : json(nullptr);
    r["relative_difference"] = q.relative_difference ? json(*q.relative_difference) : json(nullptr);
    // both paths vanish identically on flat tori; compare absolutely there
    if (q.relative_difference && *q.relative_difference > tol &&
        std::max(std::abs(q.from_log), std::abs(*q.from_q4)) > 1e-12)
      out.code = check_failed;
    r["warnings"] = detail::warnings_json(q.warnings);
    out.report = r;
    return out;
  }
  if (cmd == "variation") {
    if (!is_torus(s)) throw usage_error("variation needs a torus metric (kind fourier)");
    if (o.perturbation.empty()) throw usage_error("variation needs --perturbation FILE");
    const MetricSpec ps = load_spec(o.perturbation);
    if (ps.dimension != n) throw spec_error("perturbation.dimension", "differs from the metric dimension");
    const FourierMetric g(fourier_field(s, o.seed));
    FourierField h;
    if (ps.kind == "conformal")
      h = g.field().times(detail::trig_field(n, ps.conformal));
    else if (ps.kind == "fourier")
      h = fourier_field(ps);
    else
      throw spec_error("perturbation.kind", "must be \"fourier\" or \"conformal\"");
    VariationOptions vo;
    vo.quadrature = detail::quadrature(o);
    vo.t_step = o.dt;
    vo.boundary = o.boundary;
    if (o.variation_sign != "plus" && o.variation_sign != "minus")
      throw usage_error("--variation-sign must be plus or minus");
    vo.sign = o.variation_sign == "plus" ? VariationSign::raised_index : VariationSign::inverse_derivative;
    const auto v = variation_check(g, h, vo);
    const double tol = o.tol.value_or(1e-4);
    constexpr double degenerate = 1e-8;
    r["conventions"] = conventions(n, vo.sign);
    r["resolution"] = v.resolution;
    r["t_step"] = v.t_step;
    r["dq_richardson"] = v.dq;
    r["dq_central_h"] = v.dq_h;
    r["dq_central_2h"] = v.dq_2h;
    r["dq_q4"] = v.dq_q4 ? json(*v.dq_q4) : json(nullptr);
    r["pairing"] = v.pairing;
    r["theorem_rhs"] = v.theorem_rhs;
    r["dL"] = v.dL;
    r["two_n_c_dL"] = v.two_n_c_dL;
    r["theorem_discrepancy"] = v.theorem_discrepancy;
    r["volume_discrepancy"] = v.volume_discrepancy;
    const bool both_small = std::abs(v.dq) <= degenerate && std::abs(v.theorem_rhs) <= degenerate;
    r["degenerate"] = both_small;
    bool pass = both_small || v.theorem_discrepancy <= tol;
    if (v.boundary) {
      const auto& b = *v.boundary;
      json bj;
      bj["eps"] = b.eps;
      bj["values"] = b.values;
      bj["log_coefficient"] = b.log_coefficient;
      bj["analytic"] = b.analytic;
      bj["fit_residual"] = b.fit_residual;
      bj["warnings"] = detail::warnings_json(b.warnings);
      r["boundary"] = bj;
    }
    r["tolerance"] = tol;
    r["passed"] = pass;
    r["warnings"] = detail::warnings_json(v.warnings);
    if (!pass) out.code = check_failed;
    out.report = r;
    return out;
  }
  throw usage_error("unknown command '" + cmd + "'");
}

/// Flattened "path = value" lines.
inline void write_table(const json& j, const std::string& prefix, std::ostream& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      write_table(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else if (j.is_array() && !j.empty() && (j[0].is_array() || j[0].is_object())) {
    for (std::size_t i = 0; i < j.size(); ++i) write_table(j[i], prefix + "[" + std::to_string(i) + "]", out);
  } else {
    out << prefix << " = " << (j.is_string() ? j.get<std::string>() : j.dump()) << "\n";
  }
}

/// Entry point shared by the executable and the tests.
inline int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conformal curvature invariants, Poincare-metric expansions and Q-curvature checks"};
  app.require_subcommand(1);
  Options o;
  bool as_json = false;  // JSON is the default; the flag only documents intent

  auto add_common = [&](CLI::App* c) {
    c->add_option("spec", o.spec_path, "metric spec (JSON)")->required();
    c->add_option("--backend", o.backend, "rational or float")->check(CLI::IsMember({"rational", "float"}));
    c->add_option("--degree", o.degree, "degree cap of the jet");
    c->add_option("--tol", o.tol, "tolerance for float comparisons");
    c->add_option("--seed", o.seed, "seed for randomized builtin specs");
    c->add_flag("--json", as_json, "JSON output (default)");
    c->add_flag("--table", o.table, "flattened text output");
  };
  auto add_grid = [&](CLI::App* c) {
    c->add_option("--grid", o.grid, "quadrature points per axis (default 2K+5)");
    c->add_option("--threads", o.threads, "worker threads (0: all cores)");
  };
  auto* report = app.add_subcommand("report", "curvature tensors at the base point");
  add_common(report);
  auto* obstruction = app.add_subcommand("obstruction", "obstruction tensor");
  add_common(obstruction);
  obstruction->add_option("--path", o.path, "fg, closed or both");
  auto* fg = app.add_subcommand("fg-expand", "radial expansion coefficients");
  add_common(fg);
  fg->add_option("--order", o.order, "highest order to solve (default n)");
  auto* volume = app.add_subcommand("volume", "volume coefficients / log coefficient");
  add_common(volume);
  add_grid(volume);
  volume->add_flag("--error-estimate", o.error_estimate, "repeat on a coarser grid for an error estimate");
  auto* qcheck = app.add_subcommand("q-check", "Q integral by two paths");
  add_common(qcheck);
  add_grid(qcheck);
  auto* variation = app.add_subcommand("variation", "variation of the Q integral along g + t h");
  add_common(variation);
  add_grid(variation);
  variation->add_option("--perturbation", o.perturbation, "perturbation spec (fourier or conformal)")->required();
  variation->add_option("--dt", o.dt, "t step (Richardson over dt and 2 dt)");
  variation->add_flag("--boundary", o.boundary, "also fit the boundary-integral log coefficient");
  variation->add_option("--variation-sign", o.variation_sign, "plus (h raised) or minus (inverse derivative)");

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return validation;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    auto res = run_command(cmd, o);
    if (o.table)
      write_table(res.report, "", out);
    else
      out << res.report.dump(2) << "\n";
    if (res.code == check_failed) err << "check failed\n";
    return res.code;
  } catch (const usage_error& e) {
    err << "error: " << e.what() << "\n";
    return validation;
  } catch (const degenerate_metric& e) {
    err << "numerical failure: " << e.what() << "\n";
    return numerical;
  } catch (const insufficient_degree& e) {
    err << "numerical failure: " << e.what() << "\n";
    return numerical;
  }
}

}  // namespace confjet::cli
