#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

namespace supermarket {

/// Entrywise (Hadamard) power a^{.p}. Accepts any dense expression.
/// Fractional exponents require nonnegative entries; integral exponents are
/// valid for any sign.
template <class Derived>
typename Derived::PlainObject hadamard_power(const Eigen::MatrixBase<Derived>& v,
                                             typename Derived::Scalar p) {
  using Scalar = typename Derived::Scalar;
  using std::floor;
  if (p != floor(p) && (v.array() < Scalar(0)).any())
    throw std::domain_error("hadamard_power: fractional exponent of a negative entry");
  return v.array().pow(p).matrix();
}

template <class Derived>
typename Derived::PlainObject hadamard_power(const Eigen::MatrixBase<Derived>& v, int p) {
  return hadamard_power(v, typename Derived::Scalar(p));
}

}  // namespace supermarket
