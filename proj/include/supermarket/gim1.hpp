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

/// Phase-type service with a batch-size distribution: each service completion
/// removes a whole batch, with duration governed by (alpha, T).
template <class S>
struct BatchPhServiceT {
  RowVectorX<S> alpha;
  MatrixX<S> T;
  /// b[k-1] is the probability of batch size k.
  std::vector<S> b;

  VectorX<S> T0;
  RowVectorX<S> eta;
  S mu{0};
  S b_bar{0};

  Eigen::Index phases() const { return T.rows(); }
  int max_batch() const { return static_cast<int>(b.size()); }
  /// Probability of a batch of size >= l (1-indexed); zero past the cap.
  S batch_tail(int l) const {
    S sum = S(0);
    for (int k = l; k <= max_batch(); ++k) sum += b[static_cast<size_t>(k - 1)];
    return sum;
  }
};

using BatchPhService = BatchPhServiceT<double>;

template <class S>
BatchPhServiceT<S> make_batch_ph_service(RowVectorX<S> alpha, MatrixX<S> T, std::vector<S> b) {
  BatchPhServiceT<S> svc;
  svc.alpha = std::move(alpha);
  svc.T = std::move(T);
  svc.b = std::move(b);

  const Eigen::Index m = svc.T.rows();
  if (svc.T.cols() != m) throw ShapeError("ph service: T must be square");
  if (svc.alpha.size() != m) throw ShapeError("ph service: alpha length must match T");
  if ((svc.alpha.array() < S(-1e-14)).any() || std::abs(svc.alpha.sum() - S(1)) > S(1e-12))
    throw ShapeError("ph service: alpha must be a probability vector");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(svc.T(i, i) < S(0))) throw ShapeError("ph service: T diagonal must be strictly negative");
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j && svc.T(i, j) < S(-1e-14))
        throw ShapeError("ph service: T off-diagonal must be nonnegative");
  }
  if (svc.b.empty()) throw ShapeError("ph service: batch distribution must be nonempty");
  S bsum = S(0);
  for (const S& bk : svc.b) {
    if (bk < S(-1e-14)) throw ShapeError("ph service: batch probabilities must be nonnegative");
    bsum += bk;
  }
  if (std::abs(bsum - S(1)) > S(1e-12))
    throw ShapeError("ph service: batch probabilities must sum to 1");

  svc.T0 = -svc.T.rowwise().sum();
  if ((svc.T0.array() < S(-1e-12)).any() || svc.T0.maxCoeff() <= S(0))
    throw ShapeError("ph service: exit rates -Te must be nonnegative with a positive entry");
  svc.eta = generator_stationary_vector((svc.T + svc.T0 * svc.alpha).eval());
  svc.mu = (svc.eta * svc.T0).value();
  for (int k = 1; k <= svc.max_batch(); ++k) svc.b_bar += S(k) * svc.b[static_cast<size_t>(k - 1)];
  return svc;
}

template <class S>
struct PhStationaryT {
  RowVectorX<S> eta;
  S mu;
};

using PhStationary = PhStationaryT<double>;

/// Stationary vector of the service-phase chain T + T0 alpha and the
/// completion rate mu = eta T0 (also 1 / (-alpha T^{-1} e)).
template <class S>
PhStationaryT<S> ph_stationary(const BatchPhServiceT<S>& svc) {
  return {svc.eta, svc.mu};
}

/// Poisson-arrival, batch-PH-service supermarket model with input choice d.
template <class S>
struct Gim1ModelT {
  S lambda;
  BatchPhServiceT<S> service;
  int d;

  S rho;    ///< lambda / (mu * b_bar): offered load per customer slot.
  S a;      ///< lambda / mu: batch-service work ratio used by the tail system.
  S theta;  ///< (eta^{entrywise d}) e.

  Eigen::Index phases() const { return service.phases(); }
  int max_batch() const { return service.max_batch(); }
};

using Gim1Model = Gim1ModelT<double>;

template <class S>
Gim1ModelT<S> make_gim1_model(S lambda, BatchPhServiceT<S> service, int d) {
  if (!(lambda > S(0))) throw ShapeError("gim1 model: arrival rate must be positive");
  if (d < 1) throw ShapeError("gim1 model: choice number must be at least 1");
  Gim1ModelT<S> model;
  model.lambda = lambda;
  model.service = std::move(service);
  model.d = d;
  model.rho = lambda / (model.service.mu * model.service.b_bar);
  if (!(model.rho < S(1)))
    throw StabilityError("gim1 model: offered load " + std::to_string(static_cast<double>(model.rho)) +
                         " is not below 1");
  model.a = lambda / model.service.mu;
  model.theta = hadamard_power(model.service.eta, model.d).sum();
  return model;
}

/// First-column entries of the inverse of the unit-diagonal triangular
/// Toeplitz matrix built from the batch distribution, i.e. the renewal
/// sequence u_0 = 1, u_j = sum_i b_i u_{j-i}.
template <class S>
struct RenewalInverseT {
  std::vector<S> u;
};

using RenewalInverse = RenewalInverseT<double>;

template <class S>
RenewalInverseT<S> renewal_inverse(const std::vector<S>& b, int K) {
  if (K < 0) throw ShapeError("renewal_inverse: length must be nonnegative");
  S bsum = S(0);
  for (const S& bk : b) bsum += bk;
  if (std::abs(bsum - S(1)) > S(1e-12))
    throw ShapeError("renewal_inverse: batch probabilities must sum to 1");
  RenewalInverseT<S> inv;
  inv.u.assign(static_cast<size_t>(K) + 1, S(0));
  inv.u[0] = S(1);
  const int B = static_cast<int>(b.size());
  for (int j = 1; j <= K; ++j) {
    S sum = S(0);
    for (int i = 1; i <= std::min(j, B); ++i)
      sum += b[static_cast<size_t>(i - 1)] * inv.u[static_cast<size_t>(j - i)];
    inv.u[static_cast<size_t>(j)] = sum;
  }
  return inv;
}

template <class S>
struct Gim1SolutionT {
  TailSequenceT<S> seq;
  int iterations{0};
  S last_change{0};
  /// Norm bound of the linear map applied per sweep: a * theta * max_j u_j.
  S contraction_bound{0};
  /// Whether every iterate dominated its predecessor entrywise.
  bool monotone{true};
};

using Gim1Solution = Gim1SolutionT<double>;

namespace detail {

/// Residual of the aggregate tail balance at r (levels beyond K read as 0):
/// level 0 mass balance, then one equation per tail level.
template <class S>
std::vector<S> gim1_balance_residuals(const std::vector<S>& r1, const Gim1ModelT<S>& model) {
  const int K = static_cast<int>(r1.size());
  const S a = model.a;
  const S theta = model.theta;
  const int d = model.d;
  const int B = model.max_batch();
  auto r = [&](int k) { return (k >= 1 && k <= K) ? r1[static_cast<size_t>(k - 1)] : S(0); };
  using std::pow;
  std::vector<S> res(static_cast<size_t>(K) + 1, S(0));
  S mass = S(0);
  for (int l = 1; l <= std::min(K, B); ++l) mass += r(l) * model.service.batch_tail(l);
  res[0] = mass - a;
  for (int k = 1; k <= K; ++k) {
    S v = -r(k);
    for (int l = 1; l <= B; ++l) v += model.service.b[static_cast<size_t>(l - 1)] * r(k + l);
    if (k == 1)
      v += a - a * theta * pow(r(1), S(d));
    else
      v += a * theta * (pow(r(k - 1), S(d)) - pow(r(k), S(d)));
    res[static_cast<size_t>(k)] = v;
  }
  return res;
}

}  // namespace detail

/// Iterative fixed-point solver: alternates evaluating the nonlinear
/// powered terms at the current iterate with an exact back-substitution
/// solve of the triangular batch system (the renewal-inverse application),
/// starting from zero. Boundary information travels one level per sweep, so
/// the solver always runs at least K sweeps before testing convergence;
/// otherwise a deep level whose true value is far below eps would be left
/// at exactly zero. Stops once successive iterates differ by less than eps
/// in sup norm and the balance residuals are below 1e-10.
template <class S>
Gim1SolutionT<S> gim1_fixed_point(const Gim1ModelT<S>& model, int K, S eps = S(1e-12)) {
  if (K < 1) throw ShapeError("gim1_fixed_point: need at least one tail level");
  const S a = model.a;
  const S theta = model.theta;
  const int d = model.d;
  const int B = model.max_batch();
  if (!(a * theta < S(1)))
    throw StabilityError("gim1_fixed_point: contraction factor " +
                         std::to_string(static_cast<double>(a * theta)) + " is not below 1");

  Gim1SolutionT<S> sol;
  {
    const auto inv = renewal_inverse(model.service.b, K);
    S max_u = S(0);
    for (const S& uj : inv.u) max_u = std::max(max_u, uj);
    sol.contraction_bound = a * theta * max_u;
  }

  std::vector<S> r(static_cast<size_t>(K), S(0));
  std::vector<S> next(static_cast<size_t>(K), S(0));
  using std::pow;
  const int cap = 1000000;
  int it = 0;
  for (; it < cap; ++it) {
    auto r_at = [&](int k) { return (k >= 1 && k <= K) ? r[static_cast<size_t>(k - 1)] : S(0); };
    auto next_at = [&](int k) {
      return (k >= 1 && k <= K) ? next[static_cast<size_t>(k - 1)] : S(0);
    };
    for (int k = K; k >= 1; --k) {
      S v = (k == 1) ? a * (S(1) - theta * pow(r_at(1), S(d)))
                     : a * theta * (pow(r_at(k - 1), S(d)) - pow(r_at(k), S(d)));
      for (int l = 1; l <= std::min(B, K - k); ++l)
        v += model.service.b[static_cast<size_t>(l - 1)] * next_at(k + l);
      next[static_cast<size_t>(k - 1)] = v;
    }
    S change = S(0);
    for (int k = 0; k < K; ++k) {
      change = std::max(change, std::abs(next[static_cast<size_t>(k)] - r[static_cast<size_t>(k)]));
      if (next[static_cast<size_t>(k)] < r[static_cast<size_t>(k)] - S(1e-14))
        sol.monotone = false;
    }
    r.swap(next);
    sol.last_change = change;
    if (it + 1 >= K && change < eps) {
      const auto res = detail::gim1_balance_residuals(r, model);
      S sup = S(0);
      for (const S& v : res) sup = std::max(sup, std::abs(v));
      if (sup < S(1e-10)) break;
      // Residual stuck above the floor with a converged iterate means the
      // truncation is too short for the requested accuracy.
      if (change < eps * S(1e-2)) {
        std::vector<double> partial(r.begin(), r.end());
        throw ConvergenceError(
            "gim1_fixed_point: iterates converged but balance residual is " +
                std::to_string(static_cast<double>(sup)) +
                "; increase the level cap",
            partial, static_cast<double>(sup));
      }
    }
  }
  if (it >= cap) {
    std::vector<double> partial(r.begin(), r.end());
    throw ConvergenceError("gim1_fixed_point: no convergence within iteration cap", partial,
                           static_cast<double>(sol.last_change));
  }
  sol.iterations = it + 1;

  sol.seq.base = model.service.eta;
  sol.seq.pi0 = RowVectorX<S>::Ones(1);
  sol.seq.r.assign(static_cast<size_t>(K) + 1, S(0));
  sol.seq.r[0] = S(1);
  for (int k = 1; k <= K; ++k) sol.seq.r[static_cast<size_t>(k)] = r[static_cast<size_t>(k - 1)];
  return sol;
}

template <class S>
ChoiceDecompositionT<S> gim1_decomposition(const Gim1ModelT<S>& model, int K,
                                           Closure closure = Closure::open) {
  if (K < 2) throw ShapeError("gim1_decomposition: need at least two tail levels");
  const Eigen::Index m = model.phases();
  const int B = model.max_batch();
  ChoiceDecompositionT<S> dec;
  dec.level_dims.assign(static_cast<size_t>(K) + 1, m);
  dec.level_dims[0] = 1;

  typename ChoiceDecompositionT<S>::Part right;
  right.choice = model.d;
  right.generator.level_dims = dec.level_dims;
  right.generator.block(0, 0) = -model.lambda * MatrixX<S>::Ones(1, 1);
  right.generator.block(0, 1) = model.lambda * model.service.alpha;
  for (int k = 1; k < K; ++k) {
    right.generator.block(k, k) = -model.lambda * MatrixX<S>::Identity(m, m);
    right.generator.block(k, k + 1) = model.lambda * MatrixX<S>::Identity(m, m);
  }
  if (closure == Closure::open) {
    right.generator.block(K, K) = -model.lambda * MatrixX<S>::Identity(m, m);
    right.generator.open_row_levels.insert(K);
  } else {
    right.generator.block(K, K) = MatrixX<S>::Zero(m, m);
    right.generator.zero_diagonal_levels.insert(K);
  }

  typename ChoiceDecompositionT<S>::Part left;
  left.choice = 1;
  left.generator.level_dims = dec.level_dims;
  left.generator.zero_diagonal_levels.insert(0);
  const MatrixX<S> exit_restart = model.service.T0 * model.service.alpha;
  for (int k = 1; k <= K; ++k) {
    left.generator.block(k, k) = model.service.T;
    const S tail = model.service.batch_tail(k);
    if (tail > S(0)) left.generator.block(k, 0) = tail * model.service.T0;
    for (int l = 1; l <= std::min(B, k - 1); ++l)
      left.generator.block(k, k - l) = model.service.b[static_cast<size_t>(l - 1)] * exit_restart;
  }

  dec.right.push_back(std::move(right));
  dec.left.push_back(std::move(left));
  return dec;
}

template <class S>
struct Gim1ResidualReportT {
  /// Level-0 mass balance followed by one aggregate equation per level.
  std::vector<S> balance_residuals;
  S max_balance_residual{0};
  /// Sup norm of the phase-resolved balance at pi_k = r(k) eta (diagnostic:
  /// the ansatz only guarantees the aggregate equations).
  std::vector<S> vector_residuals;
  S vector_sup{0};
};

using Gim1ResidualReport = Gim1ResidualReportT<double>;

template <class S>
Gim1ResidualReportT<S> gim1_aggregate_residual(const TailSequenceT<S>& seq,
                                               const Gim1ModelT<S>& model) {
  Gim1ResidualReportT<S> rep;
  const int K = seq.max_level();
  std::vector<S> r1(static_cast<size_t>(K));
  for (int k = 1; k <= K; ++k) r1[static_cast<size_t>(k - 1)] = seq.r_at(k);
  rep.balance_residuals = detail::gim1_balance_residuals(r1, model);
  for (const S& v : rep.balance_residuals)
    rep.max_balance_residual = std::max(rep.max_balance_residual, std::abs(v));

  const int d = model.d;
  const int B = model.max_batch();
  const S lambda = model.lambda;
  const MatrixX<S> exit_restart = model.service.T0 * model.service.alpha;
  auto pi_at = [&](int k) -> RowVectorX<S> {
    return seq.r_at(k) * seq.base;  // only used for k >= 1
  };
  rep.vector_residuals.reserve(static_cast<size_t>(K) + 1);
  {
    S v = -lambda;
    for (int l = 1; l <= std::min(K, B); ++l)
      v += (pi_at(l) * model.service.T0).value() * model.service.batch_tail(l);
    rep.vector_residuals.push_back(std::abs(v));
  }
  for (int k = 1; k <= K; ++k) {
    RowVectorX<S> res = pi_at(k) * model.service.T - lambda * hadamard_power(pi_at(k), d);
    if (k == 1)
      res += lambda * model.service.alpha;
    else
      res += lambda * hadamard_power(pi_at(k - 1), d);
    for (int l = 1; l <= std::min(B, K - k); ++l)
      res += model.service.b[static_cast<size_t>(l - 1)] * (pi_at(k + l) * exit_restart);
    rep.vector_residuals.push_back(res.cwiseAbs().maxCoeff());
  }
  for (const S v : rep.vector_residuals) rep.vector_sup = std::max(rep.vector_sup, v);
  return rep;
}

}  // namespace supermarket
