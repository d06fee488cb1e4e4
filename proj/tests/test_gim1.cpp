#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "supermarket/gim1.hpp"

using namespace supermarket;
using supermarket::testing::service_matrix_1;
using supermarket::testing::unit_batch_gim1;

namespace {

Eigen::RowVectorXd half_half() {
  Eigen::RowVectorXd alpha(2);
  alpha << 0.5, 0.5;
  return alpha;
}

Eigen::MatrixXd three_phase_T() {
  Eigen::MatrixXd T(3, 3);
  T << -10, 2, 4, 3, -7, 4, 0, 2, -5;
  return T;
}

}  // namespace

TEST_CASE("service-phase stationary vector and completion rate") {
  const BatchPhService two = make_batch_ph_service(half_half(), service_matrix_1(), {1.0});
  CHECK(std::abs(two.eta(0) - 0.5625) < 1e-13);
  CHECK(std::abs(two.eta(1) - 0.4375) < 1e-13);
  CHECK(std::abs(two.mu - 2.75) < 1e-13);

  Eigen::RowVectorXd third(3);
  third << 1.0 / 3, 1.0 / 3, 1.0 / 3;
  const BatchPhService three = make_batch_ph_service(third, three_phase_T(), {1.0});
  CHECK(std::abs(three.eta(0) - 1.0 / 6) < 1e-13);
  CHECK(std::abs(three.eta(1) - 11.0 / 36) < 1e-13);
  CHECK(std::abs(three.eta(2) - 19.0 / 36) < 1e-13);
  CHECK(std::abs(three.mu - 2.25) < 1e-13);

  Eigen::RowVectorXd one(1);
  one << 1.0;
  Eigen::MatrixXd T1(1, 1);
  T1 << -3.5;
  const BatchPhService single = make_batch_ph_service(one, T1, {1.0});
  CHECK(std::abs(single.eta(0) - 1.0) < 1e-15);
  CHECK(std::abs(single.mu - 3.5) < 1e-15);

  const PhStationary st = ph_stationary(two);
  CHECK(st.eta.isApprox(two.eta));
  CHECK(st.mu == two.mu);
  // Identities eta * T * e = -mu and eta * T0 = mu.
  CHECK(std::abs((two.eta * two.T).sum() + two.mu) < 1e-12);
  CHECK(std::abs((two.eta * two.T0).value() - two.mu) < 1e-12);
}

TEST_CASE("service descriptor validation") {
  Eigen::RowVectorXd alpha(2);
  alpha << 0.7, 0.4;  // does not sum to one
  CHECK_THROWS_AS((void)make_batch_ph_service(alpha, service_matrix_1(), {1.0}), ShapeError);

  Eigen::MatrixXd bad = service_matrix_1();
  bad(0, 0) = -2;  // row sum positive: exit rates become negative
  CHECK_THROWS_AS((void)make_batch_ph_service(half_half(), bad, {1.0}), ShapeError);

  CHECK_THROWS_AS((void)make_batch_ph_service(half_half(), service_matrix_1(), {0.5, 0.4}),
                  ShapeError);
}

TEST_CASE("renewal sequence of the batch distribution") {
  const RenewalInverse point = renewal_inverse(std::vector<double>{1.0}, 6);
  for (const double u : point.u) CHECK(u == 1.0);

  const RenewalInverse even = renewal_inverse(std::vector<double>{0.5, 0.5}, 4);
  CHECK(even.u[0] == 1.0);
  CHECK(std::abs(even.u[1] - 0.5) < 1e-15);
  CHECK(std::abs(even.u[2] - 0.75) < 1e-15);
  CHECK(std::abs(even.u[3] - 0.625) < 1e-15);

  // Generic distribution: entries match the convolution expansion
  // u1 = b1, u2 = b2 + b1^2, u3 = b3 + 2 b1 b2 + b1^3,
  // u4 = b4 + 2 b1 b3 + b2^2 + 3 b1^2 b2 + b1^4.
  const double b1 = 0.4, b2 = 0.3, b3 = 0.2, b4 = 0.1;
  const RenewalInverse gen = renewal_inverse(std::vector<double>{b1, b2, b3, b4}, 4);
  CHECK(std::abs(gen.u[1] - b1) < 1e-15);
  CHECK(std::abs(gen.u[2] - (b2 + b1 * b1)) < 1e-15);
  CHECK(std::abs(gen.u[3] - (b3 + 2 * b1 * b2 + b1 * b1 * b1)) < 1e-15);
  CHECK(std::abs(gen.u[4] - (b4 + 2 * b1 * b3 + b2 * b2 + 3 * b1 * b1 * b2 +
                             b1 * b1 * b1 * b1)) < 1e-14);
  for (const double u : gen.u) {
    CHECK(u >= 0.0);
    CHECK(u <= 1.0);
  }
}

TEST_CASE("renewal inverse undoes the forward batch map") {
  const std::vector<double> b = {0.4, 0.3, 0.2, 0.1};
  const int K = 24;
  const RenewalInverse inv = renewal_inverse(b, K);

  std::mt19937_64 engine(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> n(static_cast<size_t>(K) + 1);
  for (auto& v : n) v = unif(engine);

  // r(k) = sum_j u_j n(k+j), then forward map r(k) - sum_l b_l r(k+l) = n(k).
  std::vector<double> r(n.size(), 0.0);
  for (size_t k = 0; k < r.size(); ++k)
    for (size_t j = 0; k + j < n.size(); ++j) r[k] += inv.u[j] * n[k + j];
  for (size_t k = 0; k < r.size(); ++k) {
    double forward = r[k];
    for (size_t l = 1; l <= b.size() && k + l < r.size(); ++l)
      forward -= b[l - 1] * r[k + l];
    // Boundary rows use truncated convolutions on both sides consistently.
    if (k + b.size() < r.size()) CHECK(std::abs(forward - n[k]) < 1e-13);
  }
}

TEST_CASE("first published solution column is reproduced") {
  const Gim1Model model = unit_batch_gim1(1.0, half_half(), service_matrix_1(), 2);
  const Gim1Solution sol = gim1_fixed_point(model, 10, 1e-14);
  const double printed[5][2] = {{0.2045, 0.1591},
                                {0.0137, 0.0107},
                                {6.193e-05, 4.817e-05},
                                {1.259e-09, 9.793e-10},
                                {5.204e-19, 4.048e-19}};
  for (int k = 1; k <= 5; ++k) {
    const Eigen::RowVectorXd pi = sol.seq.level(k);
    for (int p = 0; p < 2; ++p) {
      const double expect = printed[k - 1][p];
      const double diff = std::abs(pi(p) - expect);
      if (expect >= 1e-3)
        CHECK(diff < 5e-4);
      else
        CHECK(diff < 1e-3 * expect);
    }
  }
  CHECK(sol.monotone);
  CHECK(std::abs(sol.seq.pi0.sum() - 1.0) < 1e-15);
  CHECK(std::abs((sol.seq.level(1)).sum() - sol.seq.r_at(1)) < 1e-14);
}

TEST_CASE("high-choice published solution column is reproduced") {
  Eigen::RowVectorXd third(3);
  third << 1.0 / 3, 1.0 / 3, 1.0 / 3;
  const Gim1Model model = unit_batch_gim1(1.0, third, three_phase_T(), 5);
  const Gim1Solution sol = gim1_fixed_point(model, 8, 1e-14);

  const Eigen::RowVectorXd pi1 = sol.seq.level(1);
  CHECK(std::abs(pi1(0) - 0.0741) < 5e-4);
  CHECK(std::abs(pi1(1) - 0.1358) < 5e-4);
  CHECK(std::abs(pi1(2) - 0.2346) < 5e-4);

  const Eigen::RowVectorXd pi3 = sol.seq.level(3);
  CHECK(std::abs(pi3(0) - 1.411e-20) < 1e-3 * 1.411e-20);
  CHECK(std::abs(pi3(1) - 2.587e-20) < 1e-3 * 2.587e-20);
  CHECK(std::abs(pi3(2) - 4.469e-20) < 1e-3 * 4.469e-20);
}

TEST_CASE("unit batches collapse to the one-step recursion") {
  const Gim1Model model = unit_batch_gim1(1.0, half_half(), service_matrix_1(), 2);
  const Gim1Solution sol = gim1_fixed_point(model, 12, 1e-13);
  const double rho_theta = model.rho * model.theta;
  CHECK(std::abs(sol.seq.r_at(1) - model.rho) < 1e-14);
  for (int k = 1; k < 12; ++k) {
    const double closed = rho_theta * std::pow(sol.seq.r_at(k), model.d);
    CHECK(std::abs(sol.seq.r_at(k + 1) - closed) < 1e-12);
  }
}

TEST_CASE("contraction bound equals the utilization-mixing product") {
  const Gim1Model unit = unit_batch_gim1(1.0, half_half(), service_matrix_1(), 2);
  const Gim1Solution sol = gim1_fixed_point(unit, 10, 1e-13);
  CHECK(std::abs(sol.contraction_bound - unit.rho * unit.theta) < 1e-14);

  // Renewal entries never exceed u_0 = 1, so the bound is a * theta exactly.
  const BatchPhService svc = make_batch_ph_service(half_half(), service_matrix_1(), {0.5, 0.5});
  const Gim1Model batch = make_gim1_model(1.5, svc, 3);
  const Gim1Solution bsol = gim1_fixed_point(batch, 24, 1e-13);
  CHECK(std::abs(bsol.contraction_bound - batch.a * batch.theta) < 1e-14);
}

TEST_CASE("aggregate balance residuals vanish at convergence") {
  const Gim1Model table_model = unit_batch_gim1(1.0, half_half(), service_matrix_1(), 2);
  const Gim1Solution sol = gim1_fixed_point(table_model, 10, 1e-14);
  const Gim1ResidualReport report = gim1_aggregate_residual(sol.seq, table_model);
  CHECK(report.max_balance_residual < 1e-10);
  CHECK(std::isfinite(report.vector_sup));

  Eigen::RowVectorXd one(1);
  one << 1.0;
  Eigen::MatrixXd T1(1, 1);
  T1 << -2.0;
  const Gim1Model scalar = make_gim1_model(1.0, make_batch_ph_service(one, T1, {1.0}), 2);
  const Gim1Solution ssol = gim1_fixed_point(scalar, 10, 1e-14);
  const Gim1ResidualReport sreport = gim1_aggregate_residual(ssol.seq, scalar);
  CHECK(sreport.max_balance_residual < 1e-10);
  CHECK(sreport.vector_sup < 1e-12);  // single phase: the ansatz is exact
}

TEST_CASE("batch service distribution solves to a consistent tail") {
  const BatchPhService svc = make_batch_ph_service(half_half(), service_matrix_1(), {0.6, 0.4});
  const Gim1Model model = make_gim1_model(2.0, svc, 2);
  const Gim1Solution sol = gim1_fixed_point(model, 28, 1e-13);
  const Gim1ResidualReport report = gim1_aggregate_residual(sol.seq, model);
  CHECK(report.max_balance_residual < 1e-10);
  CHECK(check_tail_sequence(sol.seq, 1e-10).ok());
  // Tail mass balance: sum_l r(l) * P(batch >= l) equals the per-server load.
  double mass = 0;
  for (int l = 1; l <= svc.max_batch(); ++l) mass += sol.seq.r_at(l) * svc.batch_tail(l);
  CHECK(std::abs(mass - model.a) < 1e-10);
}

TEST_CASE("stability guards") {
  // Utilization at or above one is rejected at model construction.
  CHECK_THROWS_AS((void)unit_batch_gim1(2.75, half_half(), service_matrix_1(), 2),
                  StabilityError);
  // Utilization below one but per-service load above one: no contraction.
  Eigen::RowVectorXd one(1);
  one << 1.0;
  Eigen::MatrixXd T1(1, 1);
  T1 << -2.0;
  const Gim1Model heavy = make_gim1_model(2.2, make_batch_ph_service(one, T1, {0.0, 1.0}), 2);
  CHECK(heavy.rho < 1.0);
  CHECK(heavy.a > 1.0);
  CHECK_THROWS_AS((void)gim1_fixed_point(heavy, 10, 1e-12), StabilityError);
}

TEST_CASE("decomposition structure of the service split") {
  const Gim1Model model = unit_batch_gim1(1.0, half_half(), service_matrix_1(), 2);
  const ChoiceDecomposition dec = gim1_decomposition(model, 6, Closure::lumped);
  REQUIRE(dec.left.size() == 1);
  REQUIRE(dec.right.size() == 1);
  CHECK(dec.left[0].choice == 1);
  CHECK(dec.right[0].choice == 2);
  CHECK(dec.level_dims[0] == 1);
  CHECK(dec.level_dims[1] == 2);
  CHECK(validate_decomposition(dec).ok());
  for (const auto& [ij, block] : dec.left[0].generator.blocks) {
    if (ij.first == 0) CHECK(block.cwiseAbs().maxCoeff() == 0.0);
  }

  const BatchPhService svc = make_batch_ph_service(half_half(), service_matrix_1(), {0.5, 0.5});
  const Gim1Model batch = make_gim1_model(1.0, svc, 2);
  const ChoiceDecomposition bdec = gim1_decomposition(batch, 6, Closure::lumped);
  CHECK(validate_decomposition(bdec).ok());
  // Two service sub-diagonals: completions of batch size one and two.
  CHECK(bdec.left[0].generator.blocks.count({3, 2}) == 1);
  CHECK(bdec.left[0].generator.blocks.count({3, 1}) == 1);
  const Eigen::MatrixXd expected_sub = svc.b[0] * (svc.T0 * svc.alpha);
  CHECK((bdec.left[0].generator.blocks.at({3, 2}) - expected_sub).cwiseAbs().maxCoeff() < 1e-14);

  const ChoiceDecomposition open_dec = gim1_decomposition(batch, 6, Closure::open);
  CHECK_FALSE(open_dec.right[0].generator.open_row_levels.empty());
}

TEST_CASE("truncation too short is reported, not silently wrong") {
  // Heavy utilization with a slowly decaying tail: three levels cannot hold
  // the solution mass, so the solver must refuse.
  Eigen::RowVectorXd one(1);
  one << 1.0;
  Eigen::MatrixXd T1(1, 1);
  T1 << -1.0;
  const Gim1Model model = make_gim1_model(0.95, make_batch_ph_service(one, T1, {1.0}), 1);
  CHECK_THROWS_AS((void)gim1_fixed_point(model, 3, 1e-12), ConvergenceError);
}
