#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "supermarket/decomposition.hpp"
#include "supermarket/errors.hpp"

namespace supermarket {

/// Single roving server over n waiting lines: arrivals join the shortest of
/// d sampled lines, the server moves to the longest of f sampled lines.
template <class S>
struct MobileServerModelT {
  S lambda;
  S mu;
  int d;
  int f;
  S rho;
};

using MobileServerModel = MobileServerModelT<double>;

enum class MobileRegime { doubly_exponential, geometric, transient };

inline const char* to_string(MobileRegime r) {
  switch (r) {
    case MobileRegime::doubly_exponential:
      return "doubly_exponential";
    case MobileRegime::geometric:
      return "geometric";
    default:
      return "transient";
  }
}

template <class S>
MobileServerModelT<S> make_mobile_model(S lambda, S mu, int d, int f) {
  if (!(lambda > S(0)) || !(mu > S(0)))
    throw ShapeError("mobile model: rates must be positive");
  if (d < 1 || f < 1) throw ShapeError("mobile model: choice numbers must be at least 1");
  MobileServerModelT<S> model;
  model.lambda = lambda;
  model.mu = mu;
  model.d = d;
  model.f = f;
  model.rho = lambda / mu;
  if (!(model.rho > S(0))) throw ShapeError("mobile model: load must be positive");
  return model;
}

template <class S>
struct MobileSolutionT {
  std::vector<S> pi;  ///< pi[k] for k = 0..K; pi[0] = 1.
  MobileRegime regime{MobileRegime::geometric};
  /// Tail limit: positive only in the transient regime (d < f, rho < 1),
  /// where the fraction of lines growing without bound stays above it.
  S limit{0};
};

using MobileSolution = MobileSolutionT<double>;

/// Closed-form fixed point pi_k = rho^{((d/f)^k - 1)/(d - f)} (d != f) or
/// rho^{k/f} (d = f), classified by regime.
template <class S>
MobileSolutionT<S> mobile_fixed_point(const MobileServerModelT<S>& model, int K) {
  if (K < 0) throw ShapeError("mobile_fixed_point: level cap must be nonnegative");
  MobileSolutionT<S> sol;
  const S rho = model.rho;
  const S d = S(model.d);
  const S f = S(model.f);
  using std::pow;
  if (model.d > model.f)
    sol.regime = MobileRegime::doubly_exponential;
  else if (model.d == model.f)
    sol.regime = MobileRegime::geometric;
  else {
    sol.regime = MobileRegime::transient;
    sol.limit = pow(rho, S(1) / (f - d));
  }
  sol.pi.reserve(static_cast<size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) {
    if (model.d == model.f) {
      sol.pi.push_back(pow(rho, S(k) / f));
    } else {
      const S exponent = (pow(d / f, S(k)) - S(1)) / (d - f);
      sol.pi.push_back(pow(rho, exponent));
    }
  }
  return sol;
}

/// Scalar balance residuals |pi_k^f - rho * pi_{k-1}^d| for k = 1..K; the
/// closed form satisfies them exactly in every regime.
template <class S>
std::vector<S> mobile_residual(const std::vector<S>& pi, const MobileServerModelT<S>& model) {
  if (pi.empty()) throw ShapeError("mobile_residual: empty sequence");
  std::vector<S> res;
  res.reserve(pi.size() - 1);
  using std::pow;
  for (size_t k = 1; k < pi.size(); ++k)
    res.push_back(std::abs(pow(pi[k], S(model.f)) - model.rho * pow(pi[k - 1], S(model.d))));
  return res;
}

template <class S>
ChoiceDecompositionT<S> mobile_decomposition(const MobileServerModelT<S>& model, int K,
                                             Closure closure = Closure::open) {
  if (K < 2) throw ShapeError("mobile_decomposition: need at least two tail levels");
  ChoiceDecompositionT<S> dec;
  dec.level_dims.assign(static_cast<size_t>(K) + 1, 1);

  typename ChoiceDecompositionT<S>::Part right;
  right.choice = model.d;
  right.generator.level_dims = dec.level_dims;
  for (int k = 0; k < K; ++k) {
    right.generator.block(k, k) = -model.lambda * MatrixX<S>::Ones(1, 1);
    right.generator.block(k, k + 1) = model.lambda * MatrixX<S>::Ones(1, 1);
  }
  if (closure == Closure::open) {
    right.generator.block(K, K) = -model.lambda * MatrixX<S>::Ones(1, 1);
    right.generator.open_row_levels.insert(K);
  } else {
    right.generator.block(K, K) = MatrixX<S>::Zero(1, 1);
    right.generator.zero_diagonal_levels.insert(K);
  }

  typename ChoiceDecompositionT<S>::Part left;
  left.choice = model.f;
  left.generator.level_dims = dec.level_dims;
  left.generator.zero_diagonal_levels.insert(0);
  for (int k = 1; k <= K; ++k) {
    left.generator.block(k, k - 1) = model.mu * MatrixX<S>::Ones(1, 1);
    left.generator.block(k, k) = -model.mu * MatrixX<S>::Ones(1, 1);
  }

  dec.right.push_back(std::move(right));
  dec.left.push_back(std::move(left));
  return dec;
}

/// Several Poisson customer classes sharing exponential servers, each class
/// sampling its own number of servers per arrival.
template <class S>
struct ClassArrivalT {
  S lambda;
  int d;
};

using ClassArrival = ClassArrivalT<double>;

template <class S>
struct MultiClassModelT {
  std::vector<ClassArrivalT<S>> classes;
  S mu;
  std::vector<S> rho_i;
  S rho;
};

using MultiClassModel = MultiClassModelT<double>;

template <class S>
MultiClassModelT<S> make_multiclass_model(std::vector<ClassArrivalT<S>> classes, S mu) {
  if (classes.empty()) throw ShapeError("multiclass model: at least one class is required");
  if (!(mu > S(0))) throw ShapeError("multiclass model: service rate must be positive");
  MultiClassModelT<S> model;
  model.classes = std::move(classes);
  model.mu = mu;
  model.rho = S(0);
  for (const auto& c : model.classes) {
    if (!(c.lambda > S(0))) throw ShapeError("multiclass model: class rates must be positive");
    if (c.d < 1) throw ShapeError("multiclass model: choice numbers must be at least 1");
    model.rho_i.push_back(c.lambda / mu);
    model.rho += c.lambda / mu;
  }
  if (!(model.rho < S(1)))
    throw StabilityError("multiclass model: total load " +
                         std::to_string(static_cast<double>(model.rho)) + " is not below 1");
  return model;
}

/// Forward recursion delta_0 = 1, delta_1 = rho,
/// delta_k = sum_i delta_{k-1}^{d_i} rho_i.
template <class S>
std::vector<S> multiclass_fixed_point(const MultiClassModelT<S>& model, int K) {
  if (K < 0) throw ShapeError("multiclass_fixed_point: level cap must be nonnegative");
  std::vector<S> delta;
  delta.reserve(static_cast<size_t>(K) + 1);
  delta.push_back(S(1));
  using std::pow;
  for (int k = 1; k <= K; ++k) {
    S v = S(0);
    for (size_t i = 0; i < model.classes.size(); ++i)
      v += pow(delta.back(), S(model.classes[i].d)) * model.rho_i[i];
    delta.push_back(v);
  }
  return delta;
}

/// Runs the recursion until the tail drops below tail_tol (or max_levels).
template <class S>
std::vector<S> multiclass_fixed_point_auto(const MultiClassModelT<S>& model,
                                           S tail_tol = S(1e-14), int max_levels = 4096) {
  std::vector<S> delta{S(1)};
  using std::pow;
  while (delta.back() >= tail_tol) {
    if (static_cast<int>(delta.size()) > max_levels) {
      std::vector<double> partial(delta.begin(), delta.end());
      throw ConvergenceError("multiclass_fixed_point_auto: tail still above tolerance at level " +
                                 std::to_string(max_levels),
                             partial, static_cast<double>(delta.back()));
    }
    S v = S(0);
    for (size_t i = 0; i < model.classes.size(); ++i)
      v += pow(delta.back(), S(model.classes[i].d)) * model.rho_i[i];
    delta.push_back(v);
  }
  return delta;
}

/// Residuals |delta_k - sum_i delta_{k-1}^{d_i} rho_i| for k = 1..K.
template <class S>
std::vector<S> multiclass_residual(const std::vector<S>& delta, const MultiClassModelT<S>& model) {
  if (delta.empty()) throw ShapeError("multiclass_residual: empty sequence");
  std::vector<S> res;
  res.reserve(delta.size() - 1);
  using std::pow;
  for (size_t k = 1; k < delta.size(); ++k) {
    S v = S(0);
    for (size_t i = 0; i < model.classes.size(); ++i)
      v += pow(delta[k - 1], S(model.classes[i].d)) * model.rho_i[i];
    res.push_back(std::abs(delta[k] - v));
  }
  return res;
}

template <class S>
ChoiceDecompositionT<S> multiclass_decomposition(const MultiClassModelT<S>& model, int K,
                                                 Closure closure = Closure::open) {
  if (K < 2) throw ShapeError("multiclass_decomposition: need at least two tail levels");
  ChoiceDecompositionT<S> dec;
  dec.level_dims.assign(static_cast<size_t>(K) + 1, 1);

  for (const auto& c : model.classes) {
    typename ChoiceDecompositionT<S>::Part right;
    right.choice = c.d;
    right.generator.level_dims = dec.level_dims;
    for (int k = 0; k < K; ++k) {
      right.generator.block(k, k) = -c.lambda * MatrixX<S>::Ones(1, 1);
      right.generator.block(k, k + 1) = c.lambda * MatrixX<S>::Ones(1, 1);
    }
    if (closure == Closure::open) {
      right.generator.block(K, K) = -c.lambda * MatrixX<S>::Ones(1, 1);
      right.generator.open_row_levels.insert(K);
    } else {
      right.generator.block(K, K) = MatrixX<S>::Zero(1, 1);
      right.generator.zero_diagonal_levels.insert(K);
    }
    dec.right.push_back(std::move(right));
  }

  typename ChoiceDecompositionT<S>::Part left;
  left.choice = 1;
  left.generator.level_dims = dec.level_dims;
  left.generator.zero_diagonal_levels.insert(0);
  for (int k = 1; k <= K; ++k) {
    left.generator.block(k, k - 1) = model.mu * MatrixX<S>::Ones(1, 1);
    left.generator.block(k, k) = -model.mu * MatrixX<S>::Ones(1, 1);
  }
  dec.left.push_back(std::move(left));
  return dec;
}

}  // namespace supermarket
