#pragma once

#include <vector>

#include "supermarket/block_generator.hpp"
#include "supermarket/diagnostics.hpp"
#include "supermarket/fraction_measure.hpp"

namespace supermarket {

/// Super-exponential fixed point in product form: pi_k = r(k) * base for
/// k >= 1, with the level-0 vector stored separately. r is stored 1-indexed
/// (r[0] unused and kept at 1 so that pi_0 = pi0 uniformly).
template <class S>
struct TailSequenceT {
  RowVectorX<S> base;
  RowVectorX<S> pi0;
  std::vector<S> r;  // r[k] for k >= 1; r[0] == 1 by convention

  int max_level() const { return static_cast<int>(r.size()) - 1; }

  S r_at(int k) const {
    if (k <= 0) return S(1);
    if (k >= static_cast<int>(r.size())) return S(0);
    return r[static_cast<size_t>(k)];
  }

  RowVectorX<S> level(int k) const {
    if (k == 0) return pi0;
    return r_at(k) * base;
  }
};

using TailSequence = TailSequenceT<double>;

/// Expands the first `levels` levels of the product form into a fraction
/// measure (levels beyond the stored r are zero).
template <class S>
FractionMeasureT<S> fraction_measure_from_tail(const TailSequenceT<S>& seq, int levels) {
  FractionMeasureT<S> fm;
  fm.levels.reserve(static_cast<size_t>(levels));
  for (int k = 0; k < levels; ++k) fm.levels.push_back(seq.level(k));
  return fm;
}

/// Empirical diagnostics on a solved tail sequence: unit level-0 mass,
/// nonnegative entries, r below the tail tolerance at the cap, and r strictly
/// decreasing from its second term on (until it underflows).
template <class S>
ValidationReport check_tail_sequence(const TailSequenceT<S>& seq, double tail_tol = 1e-14,
                                     double tol = 1e-12) {
  ValidationReport report;
  const double mass_err = std::abs(static_cast<double>(seq.pi0.sum()) - 1.0);
  if (mass_err > tol) report.add("pi0 mass differs from one", 0, -1, mass_err);
  if (static_cast<double>(seq.pi0.minCoeff()) < -tol) report.add("pi0 has a negative entry", 0);
  if (static_cast<double>(seq.base.minCoeff()) < -tol) report.add("base has a negative entry");
  const int K = seq.max_level();
  if (K >= 1 && static_cast<double>(seq.r_at(K)) > tail_tol)
    report.add("tail not below tolerance at the level cap", K, -1,
               static_cast<double>(seq.r_at(K)));
  for (int k = 2; k < K; ++k) {
    const double a = static_cast<double>(seq.r_at(k));
    const double b = static_cast<double>(seq.r_at(k + 1));
    if (a == 0.0) break;  // underflowed; nothing left to compare
    if (b >= a) report.add("r not strictly decreasing past its first term", k, k + 1, b - a);
  }
  return report;
}

}  // namespace supermarket
