#pragma once

#include <vector>

#include "supermarket/block_generator.hpp"
#include "supermarket/diagnostics.hpp"

namespace supermarket {

/// How transitions that would overflow a level truncation are treated:
/// `open` drops them (the mean-field closure; the affected rows are flagged
/// as open), `lumped` redirects them onto the last level, giving a proper
/// finite chain for single-queue reference computations.
enum class Closure { open, lumped };

/// Input-output split of a block generator, with one sub-generator per choice
/// number. Output (service) parts are block lower triangular including the
/// diagonal and enter the dynamics through the Hadamard power given by their
/// choice; input (arrival) parts are block upper triangular likewise.
template <class S>
struct ChoiceDecompositionT {
  struct Part {
    int choice = 1;
    BlockGeneratorT<S> generator;
  };

  std::vector<Eigen::Index> level_dims;
  std::vector<Part> left;   // output side
  std::vector<Part> right;  // input side

  int levels() const { return static_cast<int>(level_dims.size()); }

  bool all_choices_one() const {
    for (const auto& p : left)
      if (p.choice != 1) return false;
    for (const auto& p : right)
      if (p.choice != 1) return false;
    return true;
  }

  /// Entrywise sum of all parts: the full generator of the model.
  BlockGeneratorT<S> sum() const {
    BlockGeneratorT<S> q;
    q.level_dims = level_dims;
    auto accumulate = [&q](const BlockGeneratorT<S>& g) {
      for (const auto& [ij, M] : g.blocks) q.block(ij.first, ij.second) += M;
      for (int lvl : g.open_row_levels) q.open_row_levels.insert(lvl);
    };
    for (const auto& p : left) accumulate(p.generator);
    for (const auto& p : right) accumulate(p.generator);
    // The summed diagonal may only vanish where every part allows it.
    if (!left.empty() || !right.empty()) {
      std::set<int> flags;
      bool first = true;
      auto intersect = [&](const BlockGeneratorT<S>& g) {
        if (first) {
          flags = g.zero_diagonal_levels;
          first = false;
          return;
        }
        std::set<int> keep;
        for (int lvl : flags)
          if (g.zero_diagonal_levels.count(lvl)) keep.insert(lvl);
        flags = keep;
      };
      for (const auto& p : left) intersect(p.generator);
      for (const auto& p : right) intersect(p.generator);
      q.zero_diagonal_levels = flags;
    }
    return q;
  }
};

using ChoiceDecomposition = ChoiceDecompositionT<double>;

/// Validates a decomposition: consistent level dimensions, positive choice
/// numbers, triangularity of each side, per-part generator sign patterns and
/// row sums, and the summed generator's invariants.
template <class S>
ValidationReport validate_decomposition(const ChoiceDecompositionT<S>& dec, double tol = 1e-12) {
  ValidationReport report;
  auto check_part = [&](const typename ChoiceDecompositionT<S>::Part& part, bool is_left,
                        const std::string& label) {
    if (part.choice < 1) report.add(label + ": choice number below one");
    if (part.generator.level_dims != dec.level_dims)
      report.add(label + ": level dimensions differ from the decomposition's");
    for (const auto& [ij, M] : part.generator.blocks) {
      const bool wrong_side = is_left ? (ij.first < ij.second) : (ij.first > ij.second);
      if (wrong_side && M.cwiseAbs().maxCoeff() > S(tol))
        report.add(label + ": nonzero block on the wrong side of the diagonal", ij.first,
                   ij.second);
    }
    report.merge(validate_generator(part.generator, tol), label + ": ");
  };
  for (size_t i = 0; i < dec.left.size(); ++i)
    check_part(dec.left[i], true, "left part " + std::to_string(i));
  for (size_t i = 0; i < dec.right.size(); ++i)
    check_part(dec.right[i], false, "right part " + std::to_string(i));
  report.merge(validate_generator(dec.sum(), tol), "sum: ");
  return report;
}

}  // namespace supermarket
