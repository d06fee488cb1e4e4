#pragma once

#include <cmath>
#include <string>

#include "supermarket/block_generator.hpp"
#include "supermarket/errors.hpp"
#include "supermarket/fraction_measure.hpp"
#include "supermarket/matrix_exponential.hpp"

namespace supermarket {

template <class S>
struct LinearSolutionT {
  FractionMeasureT<S> state;
  /// Fraction of probability the unnormalized evolution pushed past the
  /// truncation boundary; large values mean the truncation is too short for
  /// the requested horizon.
  S boundary_mass{0};
  bool truncation_warning = false;
};

using LinearSolution = LinearSolutionT<double>;

/// Exact single-choice evolution: propagates the packed state with the matrix
/// exponential of the summed generator and rescales so level 0 keeps mass
/// one. Only valid when every part of the model has choice 1.
template <class S>
LinearSolutionT<S> reference_linear_solution(const FractionMeasureT<S>& s0,
                                             const BlockGeneratorT<S>& gen, S t) {
  if (t < S(0)) throw ShapeError("reference_linear_solution: t must be nonnegative");
  const RowVectorX<S> w0 = pack(s0);
  if (w0.size() != gen.total_dim())
    throw ShapeError("reference_linear_solution: state size differs from the generator's");
  const MatrixX<S> Q = gen.dense();
  const MatrixX<S> P = matrix_exponential((t * Q).eval());
  RowVectorX<S> w = w0 * P;

  LinearSolutionT<S> out;
  const Eigen::Index d0 = gen.level_dims.front();
  const S mass0 = w.head(d0).sum();
  if (mass0 <= S(0) || !std::isfinite(static_cast<double>(mass0)))
    throw LinearSolveError("reference_linear_solution: level-0 mass degenerated");
  // Mass leaking through open boundary rows shows up as total-mass loss of
  // the unnormalized solution.
  out.boundary_mass = std::abs(w0.sum() - w.sum());
  out.truncation_warning = out.boundary_mass > S(1e-8);
  w /= mass0;
  out.state = unpack(w, gen.level_dims, t);
  return out;
}

/// Stationary probability vector of a small irreducible generator: solves
/// x A = 0 with x e = 1 by replacing one balance equation with the
/// normalization row.
template <class S>
RowVectorX<S> generator_stationary_vector(const MatrixX<S>& A, S tol = S(1e-10)) {
  if (A.rows() != A.cols()) throw ShapeError("generator_stationary_vector: matrix must be square");
  const Eigen::Index n = A.rows();
  MatrixX<S> M = A.transpose();
  M.row(0) = RowVectorX<S>::Ones(n);
  VectorX<S> rhs = VectorX<S>::Zero(n);
  rhs(0) = S(1);
  Eigen::FullPivLU<MatrixX<S>> lu(M);
  if (!lu.isInvertible())
    throw LinearSolveError("generator_stationary_vector: singular system; generator is reducible");
  RowVectorX<S> x = lu.solve(rhs).transpose();
  const S residual = (x * A).cwiseAbs().maxCoeff();
  if (!(residual < tol))
    throw LinearSolveError("generator_stationary_vector: residual " +
                           std::to_string(static_cast<double>(residual)) + " exceeds tolerance");
  if ((x.array() < S(-1e-12)).any())
    throw LinearSolveError("generator_stationary_vector: negative entries in stationary vector");
  RowVectorX<S> clamped = x.cwiseMax(S(0));
  return clamped / clamped.sum();
}

/// Stationary distribution of the truncated single-queue chain: solves
/// pi Q = 0 with the normalization row replacing the first equation, then
/// scales so the level-0 mass is one (matching the fraction-measure
/// convention rather than a probability vector).
template <class S>
FractionMeasureT<S> truncated_stationary_vector(const BlockGeneratorT<S>& gen, S tol = S(1e-10)) {
  const Eigen::Index n = gen.total_dim();
  const MatrixX<S> Q = gen.dense();
  MatrixX<S> M = Q.transpose();
  M.row(0) = RowVectorX<S>::Ones(n);
  VectorX<S> rhs = VectorX<S>::Zero(n);
  rhs(0) = S(1);

  Eigen::FullPivLU<MatrixX<S>> lu(M);
  if (!lu.isInvertible())
    throw LinearSolveError(
        "truncated_stationary_vector: singular system; the truncated chain is not irreducible");
  VectorX<S> w = lu.solve(rhs);
  const S residual = n > 1 ? (Q.transpose() * w).tail(n - 1).cwiseAbs().maxCoeff() : S(0);
  if (!(residual < tol))
    throw LinearSolveError("truncated_stationary_vector: residual " +
                           std::to_string(static_cast<double>(residual)) +
                           " exceeds tolerance");
  if ((w.array() < S(-1e-12)).any())
    throw LinearSolveError("truncated_stationary_vector: negative stationary entries");

  RowVectorX<S> pi = w.transpose();
  const S mass0 = pi.head(gen.level_dims.front()).sum();
  if (mass0 <= S(0))
    throw LinearSolveError("truncated_stationary_vector: empty-queue mass vanished");
  pi /= mass0;
  return unpack(pi, gen.level_dims);
}

}  // namespace supermarket
