#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "supermarket/decomposition.hpp"
#include "supermarket/errors.hpp"
#include "supermarket/hadamard.hpp"
#include "supermarket/stationary.hpp"
#include "supermarket/tail_sequence.hpp"

namespace supermarket {

/// Batch Markovian arrival process: C holds phase transitions without
/// arrivals, D[k-1] the rates of batch-size-k arrivals.
template <class S>
struct BmapDescriptorT {
  MatrixX<S> C;
  std::vector<MatrixX<S>> D;

  Eigen::Index phases() const { return C.rows(); }
  int max_batch() const { return static_cast<int>(D.size()); }

  MatrixX<S> arrival_sum() const {
    MatrixX<S> sum = MatrixX<S>::Zero(C.rows(), C.cols());
    for (const auto& Dk : D) sum += Dk;
    return sum;
  }
  /// Rates of batches of size >= k (1-indexed).
  MatrixX<S> arrival_tail(int k) const {
    MatrixX<S> sum = MatrixX<S>::Zero(C.rows(), C.cols());
    for (int i = k; i <= max_batch(); ++i) sum += D[static_cast<size_t>(i - 1)];
    return sum;
  }
};

using BmapDescriptor = BmapDescriptorT<double>;

template <class S>
void validate_bmap(const BmapDescriptorT<S>& bmap, S tol = S(1e-12)) {
  const Eigen::Index m = bmap.C.rows();
  if (bmap.C.cols() != m) throw ShapeError("bmap: C must be square");
  if (bmap.D.empty()) throw ShapeError("bmap: at least one batch-rate matrix is required");
  for (const auto& Dk : bmap.D)
    if (Dk.rows() != m || Dk.cols() != m)
      throw ShapeError("bmap: batch-rate matrices must match C's shape");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(bmap.C(i, i) < S(0))) throw ShapeError("bmap: C diagonal must be strictly negative");
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j && bmap.C(i, j) < S(-tol))
        throw ShapeError("bmap: C off-diagonal must be nonnegative");
  }
  for (const auto& Dk : bmap.D)
    if ((Dk.array() < -tol).any()) throw ShapeError("bmap: batch-rate matrices must be nonnegative");
  const RowVectorX<S> row_sums = (bmap.C + bmap.arrival_sum()).rowwise().sum().transpose();
  if (row_sums.cwiseAbs().maxCoeff() > S(1e-12) * std::max(S(1), bmap.C.cwiseAbs().maxCoeff()))
    throw ShapeError("bmap: C plus the batch-rate matrices must have zero row sums");
}

template <class S>
struct BmapStationaryT {
  RowVectorX<S> gamma;
  S lambda;
};

using BmapStationary = BmapStationaryT<double>;

/// Stationary phase distribution of the arrival environment C + sum(D),
/// and the long-run customer arrival rate gamma (sum k D_k) e.
template <class S>
BmapStationaryT<S> bmap_stationary(const BmapDescriptorT<S>& bmap) {
  validate_bmap(bmap);
  BmapStationaryT<S> out;
  out.gamma = generator_stationary_vector((bmap.C + bmap.arrival_sum()).eval());
  S lambda = S(0);
  for (int k = 1; k <= bmap.max_batch(); ++k)
    lambda += S(k) * (out.gamma * bmap.D[static_cast<size_t>(k - 1)]).sum();
  out.lambda = lambda;
  return out;
}

/// Batch-arrival, exponential-service supermarket model with input choice d.
template <class S>
struct Mg1ModelT {
  BmapDescriptorT<S> bmap;
  S mu;
  int d;

  RowVectorX<S> gamma;
  S lambda;
  /// lambda_k = gamma (sum_{i>=k} D_i) e: arrival rate of batches of size >= k.
  std::vector<S> lambda_k;
  std::vector<S> rho_k;
  S rho;
  S theta;

  Eigen::Index phases() const { return bmap.phases(); }
  int max_batch() const { return bmap.max_batch(); }
};

using Mg1Model = Mg1ModelT<double>;

template <class S>
Mg1ModelT<S> make_mg1_model(BmapDescriptorT<S> bmap, S mu, int d) {
  if (!(mu > S(0))) throw ShapeError("mg1 model: service rate must be positive");
  if (d < 1) throw ShapeError("mg1 model: choice number must be at least 1");
  Mg1ModelT<S> model;
  model.bmap = std::move(bmap);
  model.mu = mu;
  model.d = d;
  const auto st = bmap_stationary(model.bmap);
  model.gamma = st.gamma;
  model.lambda = st.lambda;
  const int B = model.max_batch();
  model.lambda_k.resize(static_cast<size_t>(B));
  model.rho_k.resize(static_cast<size_t>(B));
  for (int k = 1; k <= B; ++k) {
    model.lambda_k[static_cast<size_t>(k - 1)] = (model.gamma * model.bmap.arrival_tail(k)).sum();
    model.rho_k[static_cast<size_t>(k - 1)] = model.lambda_k[static_cast<size_t>(k - 1)] / mu;
  }
  model.rho = model.lambda / mu;
  if (!(model.rho < S(1)))
    throw StabilityError("mg1 model: offered load " + std::to_string(static_cast<double>(model.rho)) +
                         " is not below 1");
  model.theta = S(1) / hadamard_power(model.gamma, S(1) / S(d)).sum();
  return model;
}

/// Fixed point of the mean-field system via the forward scalar recursion:
/// pi_0 = theta * gamma^{1/d entrywise}, pi_k = r(k) * gamma^{1/d entrywise}.
template <class S>
TailSequenceT<S> mg1_fixed_point(const Mg1ModelT<S>& model, int K) {
  if (K < 1) throw ShapeError("mg1_fixed_point: need at least one tail level");
  TailSequenceT<S> seq;
  seq.base = hadamard_power(model.gamma, S(1) / S(model.d));
  seq.pi0 = model.theta * seq.base;
  seq.r.assign(static_cast<size_t>(K) + 1, S(0));
  seq.r[0] = S(1);
  const S theta = model.theta;
  const int d = model.d;
  const int B = model.max_batch();
  auto rho_at = [&](int k) {
    return (k >= 1 && k <= B) ? model.rho_k[static_cast<size_t>(k - 1)] : S(0);
  };
  using std::pow;
  for (int k = 1; k <= K; ++k) {
    S value = pow(theta, S(d + 1)) * rho_at(k);
    for (int i = std::max(1, k - B); i <= k - 1; ++i)
      value += theta * pow(seq.r[static_cast<size_t>(i)], S(d)) * rho_at(k - i);
    if (!std::isfinite(static_cast<double>(value)) || value > S(1) + S(1e-12)) {
      std::vector<double> partial(seq.r.begin() + 1, seq.r.begin() + k);
      throw ConvergenceError("mg1_fixed_point: recursion left the unit interval at level " +
                                 std::to_string(k),
                             partial, static_cast<double>(value));
    }
    seq.r[static_cast<size_t>(k)] = value;
  }
  return seq;
}

/// Runs the recursion until the tail drops below tail_tol (or max_levels).
template <class S>
TailSequenceT<S> mg1_fixed_point_auto(const Mg1ModelT<S>& model, S tail_tol = S(1e-14),
                                      int max_levels = 4096) {
  int K = std::max(2, 2 * model.max_batch());
  for (;;) {
    TailSequenceT<S> seq = mg1_fixed_point(model, K);
    for (int k = 1; k <= K; ++k)
      if (seq.r[static_cast<size_t>(k)] < tail_tol) {
        seq.r.resize(static_cast<size_t>(k) + 1);
        return seq;
      }
    if (K >= max_levels) {
      std::vector<double> partial(seq.r.begin() + 1, seq.r.end());
      throw ConvergenceError("mg1_fixed_point_auto: tail still above tolerance at level " +
                                 std::to_string(K),
                             partial, static_cast<double>(seq.r.back()));
    }
    K = std::min(max_levels, 2 * K);
  }
}

template <class S>
ChoiceDecompositionT<S> mg1_decomposition(const Mg1ModelT<S>& model, int K,
                                          Closure closure = Closure::open) {
  if (K < 2) throw ShapeError("mg1_decomposition: need at least two tail levels");
  const Eigen::Index m = model.phases();
  const int B = model.max_batch();
  ChoiceDecompositionT<S> dec;
  dec.level_dims.assign(static_cast<size_t>(K) + 1, m);

  typename ChoiceDecompositionT<S>::Part right;
  right.choice = model.d;
  right.generator.level_dims = dec.level_dims;
  for (int k = 0; k <= K; ++k) {
    right.generator.block(k, k) = model.bmap.C;
    const int room = K - k;
    for (int j = 1; j <= std::min(B, room); ++j)
      right.generator.block(k, k + j) = model.bmap.D[static_cast<size_t>(j - 1)];
    if (closure == Closure::open) {
      if (room < B) right.generator.open_row_levels.insert(k);
    } else if (room < B) {
      right.generator.block(k, K) += model.bmap.arrival_tail(room + 1);
    }
  }
  if (closure == Closure::lumped) {
    // With every arrival redirected back onto the last level, its diagonal
    // block is C plus the full arrival sum, whose diagonal can reach zero.
    const MatrixX<S>& last = right.generator.block(K, K);
    for (Eigen::Index i = 0; i < m; ++i)
      if (last(i, i) > S(-1e-14)) {
        right.generator.zero_diagonal_levels.insert(K);
        break;
      }
  }

  typename ChoiceDecompositionT<S>::Part left;
  left.choice = 1;
  left.generator.level_dims = dec.level_dims;
  left.generator.zero_diagonal_levels.insert(0);
  for (int k = 1; k <= K; ++k) {
    left.generator.block(k, k - 1) = model.mu * MatrixX<S>::Identity(m, m);
    left.generator.block(k, k) = -model.mu * MatrixX<S>::Identity(m, m);
  }

  dec.right.push_back(std::move(right));
  dec.left.push_back(std::move(left));
  return dec;
}

template <class S>
struct Mg1ResidualReportT {
  /// Difference between r(k) and the right-hand side of its defining
  /// recursion (zero by construction; reported as a sanity identity).
  std::vector<S> recursion_identity;
  /// |r(j)^d * gamma (C + sum D) e| per level: the terms the closed form
  /// drops, which vanish because gamma is stationary.
  std::vector<S> dropped_terms;
  /// Sup norm of the levelwise vector balance at pi_k = r(k) base, using a
  /// one-level recursion extension above the truncation.
  std::vector<S> vector_residuals;
  S max_recursion_identity{0};
  S max_dropped_term{0};
  S vector_sup{0};
};

using Mg1ResidualReport = Mg1ResidualReportT<double>;

template <class S>
Mg1ResidualReportT<S> mg1_aggregate_residual(const TailSequenceT<S>& seq,
                                             const Mg1ModelT<S>& model) {
  Mg1ResidualReportT<S> rep;
  const int K = seq.max_level();
  const int d = model.d;
  const int B = model.max_batch();
  const S theta = model.theta;
  using std::pow;
  auto rho_at = [&](int k) {
    return (k >= 1 && k <= B) ? model.rho_k[static_cast<size_t>(k - 1)] : S(0);
  };

  rep.recursion_identity.reserve(static_cast<size_t>(K));
  for (int k = 1; k <= K; ++k) {
    S rhs = pow(theta, S(d + 1)) * rho_at(k);
    for (int i = std::max(1, k - B); i <= k - 1; ++i)
      rhs += theta * pow(seq.r_at(i), S(d)) * rho_at(k - i);
    const S diff = std::abs(seq.r_at(k) - rhs);
    rep.recursion_identity.push_back(diff);
    rep.max_recursion_identity = std::max(rep.max_recursion_identity, diff);
  }

  const S drift = (model.gamma * (model.bmap.C + model.bmap.arrival_sum())).sum();
  rep.dropped_terms.reserve(static_cast<size_t>(K));
  for (int j = 1; j <= K; ++j) {
    const S term = std::abs(pow(seq.r_at(j), S(d)) * drift / model.mu);
    rep.dropped_terms.push_back(term);
    rep.max_dropped_term = std::max(rep.max_dropped_term, term);
  }

  // Extend the tail one level so the balance at the last kept level does not
  // see an artificial cutoff.
  S r_next = pow(theta, S(d + 1)) * rho_at(K + 1);
  for (int i = std::max(1, K + 1 - B); i <= K; ++i)
    r_next += theta * pow(seq.r_at(i), S(d)) * rho_at(K + 1 - i);
  auto pi_at = [&](int k) -> RowVectorX<S> {
    if (k == 0) return seq.pi0;
    if (k <= K) return seq.r_at(k) * seq.base;
    if (k == K + 1) return r_next * seq.base;
    return RowVectorX<S>::Zero(seq.base.size());
  };
  auto pi_pow = [&](int k) { return hadamard_power(pi_at(k), d); };

  rep.vector_residuals.reserve(static_cast<size_t>(K) + 1);
  {
    const RowVectorX<S> level1 = pi_pow(0) * model.bmap.C + model.mu * pi_at(1);
    rep.vector_residuals.push_back(level1.cwiseAbs().maxCoeff());
  }
  for (int k = 1; k <= K; ++k) {
    RowVectorX<S> res = pi_pow(k) * model.bmap.C - model.mu * pi_at(k) + model.mu * pi_at(k + 1);
    for (int l = std::max(0, k - B); l <= k - 1; ++l)
      res += pi_pow(l) * model.bmap.D[static_cast<size_t>(k - l - 1)];
    rep.vector_residuals.push_back(res.cwiseAbs().maxCoeff());
  }
  for (const S v : rep.vector_residuals) rep.vector_sup = std::max(rep.vector_sup, v);
  return rep;
}

}  // namespace supermarket
