#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "confjet/errors.hpp"

namespace confjet {

/// Graded-lexicographic enumeration of monomials in `nvars` variables up to
/// a total degree cap, with precomputed product and shift tables.
///
/// Monomials of lower degree always come first, so the basis for a smaller
/// cap is a prefix of the basis for a larger one. A series truncated at cap
/// D simply stores the first count(D) coefficients.
class MonomialBasis {
 public:
  static constexpr int kMaxVars = 10;

  static std::shared_ptr<const MonomialBasis> get(int nvars, int cap) {
    if (nvars < 0 || nvars > kMaxVars) throw usage_error("unsupported variable count " + std::to_string(nvars));
    // build with headroom so that shifts and small cap increases reuse the tables
    cap = std::max(cap, nvars <= 7 ? 8 : 4);
    static std::mutex mutex;
    static std::map<int, std::shared_ptr<const MonomialBasis>> registry;
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = registry[nvars];
    if (!slot || slot->cap() < cap) slot = std::shared_ptr<const MonomialBasis>(new MonomialBasis(nvars, cap));
    return slot;
  }

  int nvars() const { return nvars_; }
  int cap() const { return cap_; }

  /// Number of monomials with total degree <= d.
  std::size_t count(int d) const {
    if (d < 0) return 0;
    if (d > cap_) throw usage_error("monomial basis cap exceeded");
    return offsets_[static_cast<std::size_t>(d) + 1];
  }

  int degree(std::size_t idx) const { return degree_[idx]; }

  std::span<const std::uint8_t> exponents(std::size_t idx) const {
    return {exps_.data() + idx * static_cast<std::size_t>(nvars_), static_cast<std::size_t>(nvars_)};
  }

  /// Index of the monomial with these exponents, or -1 when above the cap.
  std::int64_t find(std::span<const int> e) const {
    if (static_cast<int>(e.size()) != nvars_) throw usage_error("exponent length mismatch");
    std::uint64_t key = 0;
    int deg = 0;
    for (int v = 0; v < nvars_; ++v) {
      if (e[v] < 0) throw usage_error("negative exponent");
      deg += e[v];
      if (e[v] > 63) return -1;
      key = key << 6 | static_cast<std::uint64_t>(e[v]);
    }
    if (deg > cap_) return -1;
    auto it = lookup_.find(key);
    return it == lookup_.end() ? -1 : static_cast<std::int64_t>(it->second);
  }

  /// Row of product indices: product_row(a)[b] = index(a + b) for every b
  /// with degree(b) <= cap - degree(a).
  const std::int32_t* product_row(std::size_t a) const { return products_.data() + product_offset_[a]; }

  /// Index of a - e_var, or -1 if exponent of var is zero.
  std::int32_t lowered(std::size_t idx, int var) const { return lower_[idx * nvars_ + var]; }
  /// Index of a + e_var, or -1 if beyond the cap.
  std::int32_t raised(std::size_t idx, int var) const { return raise_[idx * nvars_ + var]; }

 private:
  MonomialBasis(int nvars, int cap) : nvars_(nvars), cap_(cap) {
    offsets_.push_back(0);
    std::vector<int> e(static_cast<std::size_t>(nvars), 0);
    for (int d = 0; d <= cap; ++d) {
      enumerate(e, 0, d);
      offsets_.push_back(degree_.size());
    }
    const std::size_t total = degree_.size();
    for (std::size_t i = 0; i < total; ++i) lookup_[key_of(i)] = static_cast<std::uint32_t>(i);

    lower_.assign(total * nvars_, -1);
    raise_.assign(total * nvars_, -1);
    std::vector<int> tmp(static_cast<std::size_t>(nvars));
    for (std::size_t i = 0; i < total; ++i) {
      for (int v = 0; v < nvars_; ++v) {
        auto ex = exponents(i);
        for (int w = 0; w < nvars_; ++w) tmp[w] = ex[w];
        if (tmp[v] > 0) {
          --tmp[v];
          lower_[i * nvars_ + v] = static_cast<std::int32_t>(find(tmp));
          ++tmp[v];
        }
        ++tmp[v];
        raise_[i * nvars_ + v] = static_cast<std::int32_t>(find(tmp));
      }
    }

    product_offset_.resize(total);
    std::size_t acc = 0;
    for (std::size_t a = 0; a < total; ++a) {
      product_offset_[a] = acc;
      acc += count(cap_ - degree_[a]);
    }
    products_.resize(acc);
    for (std::size_t a = 0; a < total; ++a) {
      auto ea = exponents(a);
      const std::size_t nb = count(cap_ - degree_[a]);
      std::int32_t* row = products_.data() + product_offset_[a];
      for (std::size_t b = 0; b < nb; ++b) {
        auto eb = exponents(b);
        for (int w = 0; w < nvars_; ++w) tmp[w] = ea[w] + eb[w];
        row[b] = static_cast<std::int32_t>(find(tmp));
      }
    }
  }

  // lexicographically descending within one degree: x0^d first
  void enumerate(std::vector<int>& e, int var, int remaining) {
    if (nvars_ == 0) {
      if (remaining == 0) push(e);
      return;
    }
    if (var == nvars_ - 1) {
      e[var] = remaining;
      push(e);
      e[var] = 0;
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      e[var] = k;
      enumerate(e, var + 1, remaining - k);
    }
    e[var] = 0;
  }

  void push(const std::vector<int>& e) {
    int deg = 0;
    for (int v : e) {
      exps_.push_back(static_cast<std::uint8_t>(v));
      deg += v;
    }
    degree_.push_back(deg);
  }

  std::uint64_t key_of(std::size_t idx) const {
    std::uint64_t key = 0;
    for (auto v : exponents(idx)) key = key << 6 | v;
    return key;
  }

  int nvars_;
  int cap_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint8_t> exps_;
  std::vector<int> degree_;
  std::unordered_map<std::uint64_t, std::uint32_t> lookup_;
  std::vector<std::int32_t> lower_;
  std::vector<std::int32_t> raise_;
  std::vector<std::size_t> product_offset_;
  std::vector<std::int32_t> products_;
};

}  // namespace confjet
