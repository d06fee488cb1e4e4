#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "supermarket/block_generator.hpp"

namespace supermarket {

/// Matrix exponential by scaling and squaring around a degree-13 Pade
/// approximant. Accurate to close to machine precision for the moderate-size
/// generators used here.
template <class S>
MatrixX<S> matrix_exponential(const MatrixX<S>& A) {
  const Eigen::Index n = A.rows();
  if (n != A.cols()) throw ShapeError("matrix_exponential: matrix must be square");
  if (n == 0) return MatrixX<S>();

  static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                             1187353796428800.0,  129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,       1323241920.0,
                             40840800.0,          960960.0,            16380.0,
                             182.0,               1.0};
  // Largest infinity norm for which the degree-13 approximant is accurate
  // without scaling.
  const double theta13 = 5.371920351148152;

  const double norm = static_cast<double>(A.cwiseAbs().rowwise().sum().maxCoeff());
  int squarings = 0;
  if (norm > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));

  MatrixX<S> As = A / S(std::pow(2.0, squarings));
  const MatrixX<S> I = MatrixX<S>::Identity(n, n);
  const MatrixX<S> A2 = As * As;
  const MatrixX<S> A4 = A2 * A2;
  const MatrixX<S> A6 = A2 * A4;

  MatrixX<S> U = As * (A6 * (S(b[13]) * A6 + S(b[11]) * A4 + S(b[9]) * A2) + S(b[7]) * A6 +
                       S(b[5]) * A4 + S(b[3]) * A2 + S(b[1]) * I);
  MatrixX<S> V = A6 * (S(b[12]) * A6 + S(b[10]) * A4 + S(b[8]) * A2) + S(b[6]) * A6 +
                 S(b[4]) * A4 + S(b[2]) * A2 + S(b[0]) * I;

  MatrixX<S> F = (V - U).partialPivLu().solve(V + U);
  for (int i = 0; i < squarings; ++i) F = F * F;
  return F;
}

}  // namespace supermarket
