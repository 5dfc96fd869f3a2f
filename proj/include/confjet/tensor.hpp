#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "confjet/errors.hpp"
#include "confjet/series.hpp"

namespace confjet {

enum class Variance : std::uint8_t { Co, Contra };

/// One generator of a slot-permutation symmetry: the listed transpositions
/// are applied simultaneously and the component picks up `sign`.
struct SymmetryGenerator {
  std::vector<std::pair<int, int>> swaps;
  int sign = 1;

  bool touches(int slot) const {
    return std::any_of(swaps.begin(), swaps.end(),
                       [slot](const auto& s) { return s.first == slot || s.second == slot; });
  }
};

/// Symmetry group of a tensor's components, given by generators.
class Symmetry {
 public:
  static Symmetry none() { return {}; }
  static Symmetry symmetric(int a, int b) { return Symmetry().with({{{a, b}}, 1}); }
  static Symmetry antisymmetric(int a, int b) { return Symmetry().with({{{a, b}}, -1}); }
  /// Antisymmetric in (0,1) and (2,3), symmetric under exchange of the pairs.
  static Symmetry riemann() {
    return Symmetry().with({{{0, 1}}, -1}).with({{{2, 3}}, -1}).with({{{0, 2}, {1, 3}}, 1});
  }

  Symmetry with(SymmetryGenerator g) const {
    Symmetry out = *this;
    out.gens_.push_back(std::move(g));
    return out;
  }

  const std::vector<SymmetryGenerator>& generators() const { return gens_; }

  /// Generators not involving `slot`, with later slots shifted down.
  Symmetry without_slot(int slot) const { return without_slots(slot, -1); }

  /// Generators involving neither a nor b, with the remaining slots renumbered.
  Symmetry without_slots(int a, int b) const {
    Symmetry out;
    auto renumber = [a, b](int s) { return s - (a >= 0 && s > a) - (b >= 0 && s > b); };
    for (const auto& g : gens_) {
      if (g.touches(a) || (b >= 0 && g.touches(b))) continue;
      SymmetryGenerator h{{}, g.sign};
      for (auto [x, y] : g.swaps) h.swaps.emplace_back(renumber(x), renumber(y));
      out.gens_.push_back(std::move(h));
    }
    return out;
  }

  /// Keep only generators acting on slots < rank.
  Symmetry restricted(int rank) const {
    Symmetry out;
    for (const auto& g : gens_) {
      bool ok = std::all_of(g.swaps.begin(), g.swaps.end(),
                            [rank](const auto& s) { return s.first < rank && s.second < rank; });
      if (ok) out.gens_.push_back(g);
    }
    return out;
  }

  std::string key() const {
    std::string k;
    for (const auto& g : gens_) {
      k += g.sign > 0 ? '+' : '-';
      for (auto [x, y] : g.swaps) k += std::to_string(x) + ":" + std::to_string(y) + ",";
      k += ';';
    }
    return k;
  }

 private:
  std::vector<SymmetryGenerator> gens_;
};

/// Canonical storage map for (dimension, rank, symmetry): every index tuple
/// maps to the lexicographically smallest tuple of its orbit, with a sign.
/// Orbits forced to vanish (sign conflict) have no storage.
class Layout {
 public:
  static std::shared_ptr<const Layout> get(int dim, int rank, const Symmetry& sym) {
    static std::mutex mutex;
    static std::map<std::string, std::shared_ptr<const Layout>> cache;
    const std::string key = std::to_string(dim) + "/" + std::to_string(rank) + "/" + sym.key();
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[key];
    if (!slot) slot = std::shared_ptr<const Layout>(new Layout(dim, rank, sym));
    return slot;
  }

  int dim() const { return dim_; }
  int rank() const { return rank_; }
  std::size_t full_size() const { return storage_.size(); }
  std::size_t stored_size() const { return reps_.size(); }

  /// Stored index of a flat index, or -1 for a structurally zero component.
  std::int32_t storage(std::size_t flat) const { return storage_[flat]; }
  int sign(std::size_t flat) const { return sign_[flat]; }
  std::size_t representative(std::size_t stored) const { return reps_[stored]; }

  std::size_t flatten(std::span<const int> idx) const {
    if (static_cast<int>(idx.size()) != rank_) throw usage_error("index tuple has wrong rank");
    std::size_t f = 0;
    for (int i : idx) {
      if (i < 0 || i >= dim_) throw usage_error("tensor index out of range");
      f = f * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(i);
    }
    return f;
  }

  std::vector<int> unflatten(std::size_t f) const {
    std::vector<int> idx(static_cast<std::size_t>(rank_));
    for (int s = rank_ - 1; s >= 0; --s) {
      idx[s] = static_cast<int>(f % static_cast<std::size_t>(dim_));
      f /= static_cast<std::size_t>(dim_);
    }
    return idx;
  }

 private:
  Layout(int dim, int rank, const Symmetry& sym) : dim_(dim), rank_(rank) {
    for (const auto& g : sym.generators())
      for (auto [a, b] : g.swaps)
        if (a < 0 || b < 0 || a >= rank || b >= rank) throw usage_error("symmetry slot out of range");
    std::size_t full = 1;
    for (int s = 0; s < rank; ++s) full *= static_cast<std::size_t>(dim);
    storage_.assign(full, -2);
    sign_.assign(full, 0);
    std::vector<std::pair<std::size_t, int>> orbit;
    std::map<std::size_t, int> seen;
    for (std::size_t f = 0; f < full; ++f) {
      if (storage_[f] != -2) continue;
      seen.clear();
      orbit.clear();
      seen[f] = 1;
      orbit.emplace_back(f, 1);
      bool vanishes = false;
      for (std::size_t head = 0; head < orbit.size(); ++head) {
        auto [cur, sgn] = orbit[head];
        auto idx = unflatten(cur);
        for (const auto& g : sym.generators()) {
          auto next = idx;
          for (auto [a, b] : g.swaps) std::swap(next[a], next[b]);
          std::size_t nf = flatten(next);
          int ns = sgn * g.sign;
          auto it = seen.find(nf);
          if (it == seen.end()) {
            seen[nf] = ns;
            orbit.emplace_back(nf, ns);
          } else if (it->second != ns) {
            vanishes = true;
          }
        }
      }
      if (vanishes) {
        for (auto [of, s] : orbit) storage_[of] = -1;
        continue;
      }
      // f is the smallest unassigned flat index, hence the orbit minimum
      const auto stored = static_cast<std::int32_t>(reps_.size());
      reps_.push_back(f);
      for (auto [of, s] : orbit) {
        storage_[of] = stored;
        sign_[of] = static_cast<std::int8_t>(s);
      }
    }
  }

  int dim_;
  int rank_;
  std::vector<std::int32_t> storage_;
  std::vector<std::int8_t> sign_;
  std::vector<std::size_t> reps_;
};

/// Indexed tensor whose components are jets (Series or RadialSeries).
/// Only canonical orbit representatives are stored; reads of other index
/// tuples apply the symmetry sign.
template <class R>
class TensorJet {
 public:
  using series_type = R;
  using scalar_type = typename R::scalar_type;

  struct Entry {
    const R* value;  // null for a structurally zero component
    int sign;
  };

  TensorJet() = default;

  TensorJet(int dim, std::vector<Variance> variance, Symmetry sym, int nvars, int cap)
      : dim_(dim), nvars_(nvars), cap_(cap), variance_(std::move(variance)), sym_(std::move(sym)) {
    if (dim < 1) throw usage_error("tensor dimension must be positive");
    layout_ = Layout::get(dim, rank(), sym_);
    comps_.assign(layout_->stored_size(), R::zero(nvars, cap));
  }

  static TensorJet covariant(int dim, int rank, Symmetry sym, int nvars, int cap) {
    return TensorJet(dim, std::vector<Variance>(static_cast<std::size_t>(rank), Variance::Co), std::move(sym),
                     nvars, cap);
  }

  /// Builds a tensor by calling f(index, out) for each stored component; `out`
  /// starts as a zero jet with the given cap.
  template <class F>
  static TensorJet generate(int dim, std::vector<Variance> variance, Symmetry sym, int nvars, int cap, F&& f) {
    TensorJet t(dim, std::move(variance), std::move(sym), nvars, cap);
    for (std::size_t k = 0; k < t.comps_.size(); ++k) f(t.stored_index(k), t.comps_[k]);
    return t;
  }

  int dim() const { return dim_; }
  int rank() const { return static_cast<int>(variance_.size()); }
  int nvars() const { return nvars_; }
  int cap() const { return cap_; }
  const std::vector<Variance>& variance() const { return variance_; }
  Variance variance(int slot) const { return variance_.at(static_cast<std::size_t>(slot)); }
  const Symmetry& symmetry() const { return sym_; }
  const Layout& layout() const { return *layout_; }

  std::size_t stored_size() const { return comps_.size(); }
  const R& stored(std::size_t k) const { return comps_[k]; }
  R& stored(std::size_t k) { return comps_[k]; }
  std::vector<int> stored_index(std::size_t k) const { return layout_->unflatten(layout_->representative(k)); }

  Entry entry_flat(std::size_t flat) const {
    auto s = layout_->storage(flat);
    if (s < 0) return {nullptr, 0};
    return {&comps_[static_cast<std::size_t>(s)], layout_->sign(flat)};
  }
  Entry entry(std::span<const int> idx) const { return entry_flat(layout_->flatten(idx)); }
  Entry entry(std::initializer_list<int> idx) const { return entry(std::span<const int>(idx.begin(), idx.size())); }

  /// Signed copy of a component.
  R at(std::span<const int> idx) const {
    auto e = entry(idx);
    if (!e.value) return R::zero(nvars_, cap_);
    return e.sign > 0 ? *e.value : -*e.value;
  }
  R operator()(std::initializer_list<int> idx) const { return at(std::span<const int>(idx.begin(), idx.size())); }

  /// Stores `value` at `idx` (adjusting for the orbit sign).
  void set(std::span<const int> idx, const R& value) {
    auto flat = layout_->flatten(idx);
    auto s = layout_->storage(flat);
    if (s < 0) {
      if (!value.is_zero()) throw usage_error("nonzero value for a structurally zero component");
      return;
    }
    comps_[static_cast<std::size_t>(s)] = layout_->sign(flat) > 0 ? value : -value;
  }
  void set(std::initializer_list<int> idx, const R& value) { set(std::span<const int>(idx.begin(), idx.size()), value); }

  /// acc += factor * (this component), honoring signs and structural zeros.
  void accumulate_into(R& acc, std::span<const int> idx, const scalar_type& factor) const {
    auto e = entry(idx);
    if (e.value) acc.add_scaled(*e.value, e.sign > 0 ? factor : scalar_type(-factor));
  }

  TensorJet with_cap(int cap) const {
    TensorJet out = *this;
    out.cap_ = cap;
    for (auto& c : out.comps_) c = c.with_cap(cap);
    return out;
  }

  bool is_zero() const {
    return std::all_of(comps_.begin(), comps_.end(), [](const R& c) { return c.is_zero(); });
  }

  double max_abs() const {
    double m = 0;
    for (const auto& c : comps_) m = std::max(m, c.max_abs());
    return m;
  }

  /// Constant terms of all n^rank components (flat row-major order).
  std::vector<scalar_type> base_values() const {
    std::vector<scalar_type> out(layout_->full_size(), scalar_type(0));
    for (std::size_t f = 0; f < out.size(); ++f) {
      auto e = entry_flat(f);
      if (e.value) out[f] = e.sign > 0 ? scalar_type(e.value->constant_term()) : scalar_type(-e.value->constant_term());
    }
    return out;
  }

  TensorJet& operator+=(const TensorJet& o) { return combine(o, scalar_type(1)); }
  TensorJet& operator-=(const TensorJet& o) { return combine(o, scalar_type(-1)); }
  TensorJet& operator*=(const scalar_type& f) {
    for (auto& c : comps_) c *= f;
    return *this;
  }
  friend TensorJet operator+(TensorJet a, const TensorJet& b) { return a += b; }
  friend TensorJet operator-(TensorJet a, const TensorJet& b) { return a -= b; }
  friend TensorJet operator*(TensorJet a, const scalar_type& f) { return a *= f; }
  friend TensorJet operator*(const scalar_type& f, TensorJet a) { return a *= f; }

  /// Componentwise equality over all index tuples (on the common cap).
  friend bool operator==(const TensorJet& a, const TensorJet& b) {
    if (a.dim_ != b.dim_ || a.rank() != b.rank()) return false;
    for (std::size_t f = 0; f < a.layout_->full_size(); ++f) {
      auto ea = a.entry_flat(f), eb = b.entry_flat(f);
      if (!ea.value || !eb.value) {
        if ((ea.value && !ea.value->is_zero()) || (eb.value && !eb.value->is_zero())) return false;
        continue;
      }
      if (ea.sign == eb.sign) {
        if (!(*ea.value == *eb.value)) return false;
      } else if (!(*ea.value == -*eb.value)) {
        return false;
      }
    }
    return true;
  }

 private:
  TensorJet& combine(const TensorJet& o, const scalar_type& f) {
    if (o.dim_ != dim_ || o.rank() != rank()) throw usage_error("tensor shape mismatch");
    if (o.variance_ != variance_) throw usage_error("tensor variance mismatch");
    const int c = std::min(cap_, o.cap_);
    if (c != cap_) *this = with_cap(c);
    for (std::size_t k = 0; k < comps_.size(); ++k) {
      // values come from o's own layout; symmetry of *this is kept
      comps_[k].add_scaled(o.at(stored_index(k)).with_cap(c), f);
    }
    return *this;
  }

  int dim_ = 0;
  int nvars_ = 0;
  int cap_ = 0;
  std::vector<Variance> variance_;
  Symmetry sym_;
  std::shared_ptr<const Layout> layout_;
  std::vector<R> comps_;
};

template <class R>
TensorJet<R> symmetrized(const TensorJet<R>& t, int a, int b) {
  using S = typename R::scalar_type;
  auto sym = t.symmetry().with({{{a, b}}, 1});
  return TensorJet<R>::generate(t.dim(), t.variance(), sym, t.nvars(), t.cap(), [&](std::vector<int> idx, R& out) {
    t.accumulate_into(out, idx, S(1) / S(2));
    std::swap(idx[a], idx[b]);
    t.accumulate_into(out, idx, S(1) / S(2));
  });
}

}  // namespace confjet
