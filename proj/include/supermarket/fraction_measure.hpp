#pragma once

#include <Eigen/Core>
#include <vector>

#include "supermarket/block_generator.hpp"
#include "supermarket/diagnostics.hpp"

namespace supermarket {

/// State of the mean-field system at one instant: per level k, the row vector
/// of fractions of queues with at least k customers, split by phase.
template <class S>
struct FractionMeasureT {
  std::vector<RowVectorX<S>> levels;
  S time{0};

  int num_levels() const { return static_cast<int>(levels.size()); }

  S level_mass(int k) const { return levels[static_cast<size_t>(k)].sum(); }

  std::vector<Eigen::Index> level_dims() const {
    std::vector<Eigen::Index> dims;
    dims.reserve(levels.size());
    for (const auto& row : levels) dims.push_back(row.size());
    return dims;
  }
};

using FractionMeasure = FractionMeasureT<double>;

/// Flattens all levels into one row vector, in level order.
template <class S>
RowVectorX<S> pack(const FractionMeasureT<S>& fm) {
  Eigen::Index n = 0;
  for (const auto& row : fm.levels) n += row.size();
  RowVectorX<S> out(n);
  Eigen::Index at = 0;
  for (const auto& row : fm.levels) {
    out.segment(at, row.size()) = row;
    at += row.size();
  }
  return out;
}

template <class S>
FractionMeasureT<S> unpack(const RowVectorX<S>& flat, const std::vector<Eigen::Index>& dims,
                           S time = S(0)) {
  FractionMeasureT<S> fm;
  fm.time = time;
  fm.levels.reserve(dims.size());
  Eigen::Index at = 0;
  for (Eigen::Index m : dims) {
    fm.levels.push_back(flat.segment(at, m));
    at += m;
  }
  return fm;
}

/// Checks fraction-measure invariants: S_0 nonnegative with unit mass, all
/// entries in [0, 1], and entrywise monotone tails S_k >= S_{k+1} wherever
/// adjacent levels share a phase dimension.
template <class S>
ValidationReport check_fraction_measure(const FractionMeasureT<S>& fm, double tol = 1e-10) {
  ValidationReport report;
  if (fm.levels.empty()) {
    report.add("fraction measure has no levels");
    return report;
  }
  const auto& s0 = fm.levels[0];
  const double mass_err = std::abs(static_cast<double>(s0.sum()) - 1.0);
  if (mass_err > tol) report.add("level-0 mass differs from one", 0, -1, mass_err);
  for (int k = 0; k < fm.num_levels(); ++k) {
    const auto& row = fm.levels[static_cast<size_t>(k)];
    const double lo = static_cast<double>(row.minCoeff());
    const double hi = static_cast<double>(row.maxCoeff());
    if (lo < -tol) report.add("negative fraction", k, -1, -lo);
    if (hi > 1.0 + tol) report.add("fraction above one", k, -1, hi - 1.0);
  }
  for (int k = 0; k + 1 < fm.num_levels(); ++k) {
    const auto& a = fm.levels[static_cast<size_t>(k)];
    const auto& b = fm.levels[static_cast<size_t>(k + 1)];
    if (a.size() != b.size()) continue;
    const double worst = static_cast<double>((b - a).maxCoeff());
    if (worst > tol) report.add("tail fractions not monotone", k, k + 1, worst);
  }
  return report;
}

}  // namespace supermarket
