#pragma once

#include <stdexcept>
#include <string>

namespace confjet {

/// Bad arguments: mismatched shapes, invalid slots, unsupported dimension.
class usage_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The constant term of a metric jet is singular or not positive definite.
class degenerate_metric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A jet does not carry enough derivatives for the requested quantity.
class insufficient_degree : public std::runtime_error {
 public:
  insufficient_degree(const std::string& what, int needed, int have)
      : std::runtime_error(what + " requires degree cap >= " + std::to_string(needed) +
                           ", got " + std::to_string(have)),
        needed_(needed),
        have_(have) {}

  int needed() const noexcept { return needed_; }
  int have() const noexcept { return have_; }

 private:
  int needed_;
  int have_;
};

inline void require_cap(const std::string& what, int needed, int have) {
  if (have < needed) throw insufficient_degree(what, needed, have);
}

}  // namespace confjet
