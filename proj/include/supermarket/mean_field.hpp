#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "supermarket/decomposition.hpp"
#include "supermarket/fraction_measure.hpp"
#include "supermarket/hadamard.hpp"

namespace supermarket {

/// Right-hand side of the mean-field system: for each part with choice c,
/// the state is raised entrywise to the c-th power levelwise and multiplied
/// by the part's blocks. Levels beyond the truncation are treated as zero,
/// which the stored blocks encode by omission.
template <class S>
std::vector<RowVectorX<S>> mean_field_rhs(const FractionMeasureT<S>& state,
                                          const ChoiceDecompositionT<S>& dec) {
  const int L = dec.levels();
  if (state.num_levels() != L)
    throw ShapeError("mean_field_rhs: state level count differs from the decomposition's");
  for (int k = 0; k < L; ++k)
    if (state.levels[static_cast<size_t>(k)].size() != dec.level_dims[static_cast<size_t>(k)])
      throw ShapeError("mean_field_rhs: state level " + std::to_string(k) +
                       " has the wrong phase dimension");

  std::vector<RowVectorX<S>> out;
  out.reserve(static_cast<size_t>(L));
  for (int k = 0; k < L; ++k)
    out.push_back(RowVectorX<S>::Zero(dec.level_dims[static_cast<size_t>(k)]));

  std::vector<RowVectorX<S>> powered(static_cast<size_t>(L));
  auto apply_part = [&](const typename ChoiceDecompositionT<S>::Part& part) {
    for (int k = 0; k < L; ++k)
      powered[static_cast<size_t>(k)] =
          hadamard_power(state.levels[static_cast<size_t>(k)], part.choice);
    for (const auto& [ij, M] : part.generator.blocks)
      out[static_cast<size_t>(ij.second)].noalias() +=
          powered[static_cast<size_t>(ij.first)] * M;
  };
  for (const auto& part : dec.left) apply_part(part);
  for (const auto& part : dec.right) apply_part(part);
  return out;
}

template <class S>
struct ResidualT {
  std::vector<RowVectorX<S>> levels;
  S sup_norm{0};
};

using Residual = ResidualT<double>;

/// Residual of the fixed-point equations at a candidate state: the raw
/// right-hand side and its sup norm over all entries.
template <class S>
ResidualT<S> fixed_point_residual(const FractionMeasureT<S>& state,
                                  const ChoiceDecompositionT<S>& dec) {
  ResidualT<S> res;
  res.levels = mean_field_rhs(state, dec);
  for (const auto& row : res.levels) {
    if (row.size() == 0) continue;
    res.sup_norm = std::max(res.sup_norm, row.cwiseAbs().maxCoeff());
  }
  return res;
}

template <class S>
struct IntegrationControlsT {
  S step{S(0.01)};
  /// Per-step error tolerance for the step-halving control; nonpositive turns
  /// the control off and keeps the step fixed.
  S tolerance{S(1e-8)};
  S min_step{S(1e-12)};
  /// Times at which states are recorded; defaults to {t_end}.
  std::vector<S> sample_times;
};

using IntegrationControls = IntegrationControlsT<double>;

template <class S>
struct TrajectoryT {
  std::vector<FractionMeasureT<S>> states;
  bool failed = false;
  std::string error;

  const FractionMeasureT<S>& back() const { return states.back(); }
};

using Trajectory = TrajectoryT<double>;

namespace detail {

/// Field actually integrated: the raw right-hand side plus a renormalizing
/// drift that keeps the level-0 mass at one. For all-choice-1 models the
/// solutions coincide with S(0)exp(Qt)/(level-0 mass), and fixed points of
/// the raw field are equilibria of this one.
template <class S>
RowVectorX<S> projected_rhs(const RowVectorX<S>& flat, const ChoiceDecompositionT<S>& dec,
                            const std::vector<Eigen::Index>& dims) {
  FractionMeasureT<S> fm = unpack(flat, dims);
  std::vector<RowVectorX<S>> raw = mean_field_rhs(fm, dec);
  const S drift = raw[0].sum();
  FractionMeasureT<S> g;
  g.levels.resize(raw.size());
  for (size_t k = 0; k < raw.size(); ++k) g.levels[k] = raw[k] - drift * fm.levels[k];
  return pack(g);
}

template <class S, class Rhs>
RowVectorX<S> rk4_step(const RowVectorX<S>& y, S h, const Rhs& f) {
  const RowVectorX<S> k1 = f(y);
  const RowVectorX<S> k2 = f((y + (h / S(2)) * k1).eval());
  const RowVectorX<S> k3 = f((y + (h / S(2)) * k2).eval());
  const RowVectorX<S> k4 = f((y + h * k3).eval());
  return y + (h / S(6)) * (k1 + S(2) * k2 + S(2) * k3 + k4);
}

}  // namespace detail

/// Integrates the truncated mean-field system from S0 to t_end with classic
/// fourth-order Runge-Kutta, optionally under step-halving error control,
/// recording the state at each requested sample time. On failure (step-size
/// underflow or a blown invariant) the last good state closes the trajectory
/// and `failed` is set.
template <class S>
TrajectoryT<S> integrate(const FractionMeasureT<S>& s0, const ChoiceDecompositionT<S>& dec,
                         S t_end, IntegrationControlsT<S> controls = {}) {
  TrajectoryT<S> traj;
  if (t_end < S(0)) throw ShapeError("integrate: t_end must be nonnegative");
  if (std::abs(static_cast<double>(s0.level_mass(0)) - 1.0) > 1e-8)
    throw ShapeError("integrate: initial level-0 mass must be one");

  const std::vector<Eigen::Index> dims = dec.level_dims;
  auto rhs = [&dec, &dims](const RowVectorX<S>& y) {
    return detail::projected_rhs(y, dec, dims);
  };

  std::vector<S> samples = controls.sample_times;
  if (samples.empty()) samples.push_back(t_end);
  std::sort(samples.begin(), samples.end());

  RowVectorX<S> y = pack(s0);
  S t = S(0);
  S h = controls.step > S(0) ? controls.step : S(0.01);
  const bool adaptive = controls.tolerance > S(0);

  auto record = [&](S at) { traj.states.push_back(unpack(y, dims, at)); };
  auto renormalize = [&]() -> bool {
    const S mass = unpack(y, dims).level_mass(0);
    if (!std::isfinite(static_cast<double>(mass)) || std::abs(static_cast<double>(mass) - 1.0) > 1e-3)
      return false;
    y /= mass;
    return true;
  };

  for (S target : samples) {
    if (target < S(0) || target > t_end + S(1e-12))
      throw ShapeError("integrate: sample time outside [0, t_end]");
    while (t < target - S(1e-14) * std::max(S(1), target)) {
      S step = std::min(h, target - t);
      if (!adaptive) {
        y = detail::rk4_step(y, step, rhs);
        if (!y.allFinite() || !renormalize()) {
          traj.failed = true;
          traj.error = "integration diverged at t = " + std::to_string(static_cast<double>(t));
          record(t);
          return traj;
        }
        t += step;
        continue;
      }
      // Step halving: compare one full step against two half steps and keep
      // the extrapolated fine solution when the difference is small enough.
      const RowVectorX<S> coarse = detail::rk4_step(y, step, rhs);
      RowVectorX<S> fine = detail::rk4_step(y, step / S(2), rhs);
      fine = detail::rk4_step(fine, step / S(2), rhs);
      const S err = (coarse - fine).cwiseAbs().maxCoeff() / S(15);
      if (!fine.allFinite() || !coarse.allFinite() ||
          !std::isfinite(static_cast<double>(err))) {
        h = step / S(2);
        if (h < controls.min_step) {
          traj.failed = true;
          traj.error = "step-size underflow at t = " + std::to_string(static_cast<double>(t));
          record(t);
          return traj;
        }
        continue;
      }
      if (err > controls.tolerance) {
        h = step / S(2);
        if (h < controls.min_step) {
          traj.failed = true;
          traj.error = "step-size underflow at t = " + std::to_string(static_cast<double>(t));
          record(t);
          return traj;
        }
        continue;
      }
      y = fine + (fine - coarse) / S(15);
      if (!renormalize()) {
        traj.failed = true;
        traj.error = "level-0 mass drifted at t = " + std::to_string(static_cast<double>(t));
        record(t);
        return traj;
      }
      t += step;
      if (err < controls.tolerance / S(64)) h = std::min(step * S(2), S(1e6));
    }
    t = target;
    record(target);
  }
  return traj;
}

}  // namespace supermarket
