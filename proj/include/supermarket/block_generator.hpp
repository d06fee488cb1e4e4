#pragma once

#include <Eigen/Core>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "supermarket/diagnostics.hpp"
#include "supermarket/errors.hpp"

namespace supermarket {

template <class S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowVectorX = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <class S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Generator of a level-structured Markov chain, truncated to a finite number
/// of levels and stored block-by-block. Blocks absent from the map are zero.
/// Level k has its own phase dimension level_dims[k].
template <class S>
struct BlockGeneratorT {
  std::vector<Eigen::Index> level_dims;
  std::map<std::pair<int, int>, MatrixX<S>> blocks;

  /// Block rows whose outflow was cut off by the truncation; exempt from the
  /// zero-row-sum check.
  std::set<int> open_row_levels;
  /// Levels whose diagonal block may carry zero diagonal entries, e.g. the
  /// all-zero level-0 block of an output part.
  std::set<int> zero_diagonal_levels;

  int levels() const { return static_cast<int>(level_dims.size()); }

  Eigen::Index dim(int level) const { return level_dims.at(static_cast<size_t>(level)); }

  Eigen::Index total_dim() const {
    Eigen::Index n = 0;
    for (Eigen::Index m : level_dims) n += m;
    return n;
  }

  bool has_block(int i, int j) const { return blocks.count({i, j}) != 0; }

  const MatrixX<S>* find_block(int i, int j) const {
    auto it = blocks.find({i, j});
    return it == blocks.end() ? nullptr : &it->second;
  }

  /// Reference to block (i, j), created as a correctly sized zero block if absent.
  MatrixX<S>& block(int i, int j) {
    auto [it, inserted] = blocks.try_emplace({i, j});
    if (inserted) it->second = MatrixX<S>::Zero(dim(i), dim(j));
    return it->second;
  }

  /// Row sums across the whole block row i (one value per phase of level i).
  VectorX<S> row_sums(int i) const {
    VectorX<S> sums = VectorX<S>::Zero(dim(i));
    for (const auto& [ij, M] : blocks)
      if (ij.first == i) sums += M.rowwise().sum();
    return sums;
  }

  /// Dense assembly of all blocks, levels concatenated in order.
  MatrixX<S> dense() const {
    const Eigen::Index n = total_dim();
    MatrixX<S> out = MatrixX<S>::Zero(n, n);
    std::vector<Eigen::Index> offset(level_dims.size() + 1, 0);
    for (size_t k = 0; k < level_dims.size(); ++k) offset[k + 1] = offset[k] + level_dims[k];
    for (const auto& [ij, M] : blocks)
      out.block(offset[static_cast<size_t>(ij.first)], offset[static_cast<size_t>(ij.second)],
                M.rows(), M.cols()) = M;
    return out;
  }
};

using BlockGenerator = BlockGeneratorT<double>;

/// Checks the generator sign pattern and row sums:
///  - every block has the shape implied by level_dims,
///  - off-diagonal blocks and off-diagonal entries of diagonal blocks are >= 0,
///  - diagonal entries of diagonal blocks are <= 0, and strictly negative
///    unless the level is flagged in zero_diagonal_levels,
///  - block rows sum to zero unless flagged in open_row_levels.
template <class S>
ValidationReport validate_generator(const BlockGeneratorT<S>& g, double tol = 1e-12) {
  ValidationReport report;
  const int L = g.levels();
  for (size_t k = 0; k < g.level_dims.size(); ++k)
    if (g.level_dims[k] <= 0) report.add("nonpositive level dimension", static_cast<int>(k));

  for (const auto& [ij, M] : g.blocks) {
    const auto [i, j] = ij;
    if (i < 0 || j < 0 || i >= L || j >= L) {
      report.add("block index out of range", i, j);
      continue;
    }
    if (M.rows() != g.dim(i) || M.cols() != g.dim(j)) {
      report.add("block shape mismatch", i, j);
      continue;
    }
    if (i != j) {
      double worst = static_cast<double>(M.minCoeff());
      if (worst < -tol) report.add("negative entry in off-diagonal block", i, j, -worst);
    } else {
      for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) {
          const double x = static_cast<double>(M(r, c));
          if (r == c) {
            if (x > tol) report.add("positive diagonal entry in diagonal block", i, j, x);
            else if (x > -tol && g.zero_diagonal_levels.count(i) == 0)
              report.add("zero diagonal entry in unflagged diagonal block", i, j, std::abs(x));
          } else if (x < -tol) {
            report.add("negative off-diagonal entry in diagonal block", i, j, -x);
          }
        }
      }
    }
  }

  for (int i = 0; i < L; ++i) {
    if (g.open_row_levels.count(i)) continue;
    bool has_unflagged_diag_zero = false;
    // A level with no diagonal block at all is only legal when flagged.
    if (!g.has_block(i, i) && g.zero_diagonal_levels.count(i) == 0) has_unflagged_diag_zero = true;
    if (has_unflagged_diag_zero)
      report.add("missing diagonal block on unflagged level", i, i);
    const double worst = static_cast<double>(g.row_sums(i).cwiseAbs().maxCoeff());
    if (worst > tol) report.add("block row does not sum to zero", i, -1, worst);
  }
  return report;
}

}  // namespace supermarket
