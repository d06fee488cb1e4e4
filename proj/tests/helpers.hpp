#pragma once

#include <vector>

#include "supermarket/gim1.hpp"
#include "supermarket/mg1.hpp"
#include "supermarket/multichoice.hpp"

namespace supermarket::testing {

/// Single-phase Poisson-arrival, exponential-service model (the classical
/// supermarket model) as an M/G/1-type instance.
inline Mg1Model poisson_mg1(double lambda, double mu, int d) {
  Eigen::MatrixXd C(1, 1), D1(1, 1);
  C << -lambda;
  D1 << lambda;
  return make_mg1_model(BmapDescriptor{C, {D1}}, mu, d);
}

/// Two-phase service matrix used throughout the numeric examples.
inline Eigen::MatrixXd service_matrix_1() {
  Eigen::MatrixXd T(2, 2);
  T << -4, 3, 2, -7;
  return T;
}

inline Gim1Model unit_batch_gim1(double lambda, const Eigen::RowVectorXd& alpha,
                                 const Eigen::MatrixXd& T, int d) {
  return make_gim1_model(lambda, make_batch_ph_service(alpha, T, {1.0}), d);
}

inline FractionMeasure scalar_state(const std::vector<double>& values, double time = 0) {
  FractionMeasure fm;
  fm.time = time;
  for (const double v : values) {
    Eigen::RowVectorXd row(1);
    row << v;
    fm.levels.push_back(row);
  }
  return fm;
}

}  // namespace supermarket::testing
