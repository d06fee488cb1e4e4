#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "supermarket/mean_field.hpp"
#include "supermarket/mg1.hpp"

using namespace supermarket;
using supermarket::testing::poisson_mg1;

namespace {

/// Two-phase arrival environment with per-phase Poisson rates (2, 1).
BmapDescriptor two_phase_bmap() {
  Eigen::MatrixXd C(2, 2), D1(2, 2);
  C << -3, 1, 1, -2;
  D1 << 2, 0, 0, 1;
  return BmapDescriptor{C, {D1}};
}

/// Single-phase arrivals with batches of size 1 and 2, rate 0.5 each.
BmapDescriptor batch_bmap() {
  Eigen::MatrixXd C(1, 1), D1(1, 1), D2(1, 1);
  C << -1;
  D1 << 0.5;
  D2 << 0.5;
  return BmapDescriptor{C, {D1, D2}};
}

}  // namespace

TEST_CASE("arrival environment stationary vector and rate") {
  Eigen::MatrixXd C(1, 1), D1(1, 1);
  C << -0.8;
  D1 << 0.8;
  const BmapStationary single = bmap_stationary(BmapDescriptor{C, {D1}});
  CHECK(std::abs(single.gamma(0) - 1.0) < 1e-14);
  CHECK(std::abs(single.lambda - 0.8) < 1e-14);

  const BmapStationary two = bmap_stationary(two_phase_bmap());
  // C + D = [[-1, 1], [1, -1]]: the phase chain is symmetric.
  CHECK(std::abs(two.gamma(0) - 0.5) < 1e-13);
  CHECK(std::abs(two.gamma(1) - 0.5) < 1e-13);
  CHECK(std::abs(two.lambda - 1.5) < 1e-13);

  const BmapStationary batch = bmap_stationary(batch_bmap());
  CHECK(std::abs(batch.lambda - 1.5) < 1e-14);  // 1*0.5 + 2*0.5
}

TEST_CASE("bmap validation rejects malformed descriptors") {
  Eigen::MatrixXd C(1, 1), D1(1, 1);
  C << -1;
  D1 << 0.5;  // row sums to -0.5
  CHECK_THROWS_AS(validate_bmap(BmapDescriptor{C, {D1}}), ShapeError);

  Eigen::MatrixXd C2(2, 2), D2(2, 2);
  C2 << 1, -1, 1, -2;  // positive diagonal
  D2 << 0, 0, 0, 1;
  CHECK_THROWS_AS(validate_bmap(BmapDescriptor{C2, {D2}}), ShapeError);

  Eigen::MatrixXd C3(1, 1), D3(1, 1);
  C3 << -1;
  D3 << -1;  // negative arrival rate
  CHECK_THROWS_AS(validate_bmap(BmapDescriptor{C3, {D3}}), ShapeError);
}

TEST_CASE("stability region is enforced") {
  CHECK_THROWS_AS((void)poisson_mg1(1.0, 1.0, 2), StabilityError);
  CHECK_THROWS_AS((void)poisson_mg1(1.5, 1.0, 2), StabilityError);
  CHECK_NOTHROW((void)poisson_mg1(0.999, 1.0, 2));
}

TEST_CASE("doubly exponential tail of the classical model") {
  const double rho = 0.5;
  const Mg1Model model = poisson_mg1(rho, 1.0, 2);
  const TailSequence seq = mg1_fixed_point(model, 8);
  for (int k = 1; k <= 6; ++k) {
    const double expected = std::pow(rho, std::pow(2.0, k) - 1.0);
    CHECK(std::abs(seq.r_at(k) - expected) < 1e-12);
  }
  CHECK(std::abs(seq.pi0(0) - 1.0) < 1e-15);  // theta = 1 when m = 1
}

TEST_CASE("choice one reduces to the geometric tail") {
  const double rho = 0.7;
  const Mg1Model model = poisson_mg1(rho, 1.0, 1);
  const TailSequence seq = mg1_fixed_point(model, 40);
  for (int k = 1; k <= 40; ++k)
    CHECK(std::abs(seq.r_at(k) - std::pow(rho, k)) < 1e-12);
}

TEST_CASE("general choice reduction on a single phase") {
  const double rho = 0.6;
  for (int d = 2; d <= 4; ++d) {
    const Mg1Model model = poisson_mg1(rho, 1.0, d);
    const TailSequence seq = mg1_fixed_point(model, 6);
    for (int k = 1; k <= 6; ++k) {
      const double exponent = (std::pow(d, k) - 1.0) / (d - 1.0);
      CHECK(std::abs(seq.r_at(k) - std::pow(rho, exponent)) < 1e-12);
    }
  }
}

TEST_CASE("two-phase first tail value follows the closed formula") {
  const Mg1Model model = make_mg1_model(two_phase_bmap(), 4.0, 2);
  // gamma = (1/2, 1/2), lambda_1 = 1.5, rho_1 = 0.375, theta = 1/sqrt(2).
  CHECK(std::abs(model.theta - 1.0 / std::sqrt(2.0)) < 1e-14);
  const TailSequence seq = mg1_fixed_point(model, 10);
  const double expected_r1 = std::pow(model.theta, 3) * 0.375;
  CHECK(std::abs(seq.r_at(1) - expected_r1) < 1e-15);
  CHECK(std::abs(seq.pi0.sum() - 1.0) < 1e-15);
}

TEST_CASE("batch arrivals feed the forward recursion") {
  const Mg1Model model = make_mg1_model(batch_bmap(), 2.0, 2);
  // lambda_1 = 1, lambda_2 = 0.5, mu = 2 -> rho_1 = 0.5, rho_2 = 0.25.
  REQUIRE(model.rho_k.size() >= 2);
  CHECK(std::abs(model.rho_k[0] - 0.5) < 1e-14);
  CHECK(std::abs(model.rho_k[1] - 0.25) < 1e-14);
  const TailSequence seq = mg1_fixed_point(model, 12);
  CHECK(std::abs(seq.r_at(1) - 0.5) < 1e-14);
  CHECK(std::abs(seq.r_at(2) - (0.25 + 0.5 * 0.5 * 0.5)) < 1e-14);
  CHECK(check_tail_sequence(seq).ok());
}

TEST_CASE("automatic level selection stops below the tail tolerance") {
  const Mg1Model model = poisson_mg1(0.5, 1.0, 2);
  const TailSequence seq = mg1_fixed_point_auto(model);
  CHECK(seq.r_at(seq.max_level()) < 1e-14);
  CHECK(seq.r_at(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("decomposition structure of the arrival and service parts") {
  const Mg1Model poisson = poisson_mg1(0.5, 1.0, 2);
  const ChoiceDecomposition bd = mg1_decomposition(poisson, 3, Closure::lumped);
  REQUIRE(bd.left.size() == 1);
  REQUIRE(bd.right.size() == 1);
  CHECK(bd.left[0].choice == 1);
  CHECK(bd.right[0].choice == 2);
  CHECK(validate_decomposition(bd).ok());
  // Birth-death pattern: arrivals above the diagonal, service below.
  CHECK(bd.right[0].generator.blocks.at({0, 1})(0, 0) == doctest::Approx(0.5));
  CHECK(bd.left[0].generator.blocks.at({1, 0})(0, 0) == doctest::Approx(1.0));
  // No output in level 0: the left part stores no row-0 blocks.
  for (const auto& [ij, block] : bd.left[0].generator.blocks) {
    if (ij.first == 0) CHECK(block.cwiseAbs().maxCoeff() == 0.0);
  }

  const Mg1Model batches = make_mg1_model(batch_bmap(), 2.0, 2);
  const ChoiceDecomposition two = mg1_decomposition(batches, 5, Closure::lumped);
  CHECK(validate_decomposition(two).ok());
  CHECK(two.right[0].generator.blocks.count({0, 1}) == 1);
  CHECK(two.right[0].generator.blocks.count({0, 2}) == 1);
  CHECK(two.right[0].generator.blocks.count({0, 3}) == 0);

  const ChoiceDecomposition open_dec = mg1_decomposition(batches, 5, Closure::open);
  CHECK_FALSE(open_dec.right[0].generator.open_row_levels.empty());
}

TEST_CASE("residual report certifies the solution") {
  const Mg1Model scalar = poisson_mg1(0.5, 1.0, 2);
  const TailSequence scalar_seq = mg1_fixed_point(scalar, 16);
  const Mg1ResidualReport scalar_report = mg1_aggregate_residual(scalar_seq, scalar);
  CHECK(scalar_report.max_recursion_identity < 1e-14);
  CHECK(scalar_report.max_dropped_term < 1e-14);
  CHECK(scalar_report.vector_sup < 1e-12);  // single phase: ansatz exact

  const Mg1Model two = make_mg1_model(two_phase_bmap(), 4.0, 2);
  const TailSequence two_seq = mg1_fixed_point(two, 16);
  const Mg1ResidualReport two_report = mg1_aggregate_residual(two_seq, two);
  CHECK(two_report.max_recursion_identity < 1e-14);
  CHECK(two_report.max_dropped_term < 1e-14);
  CHECK(std::isfinite(two_report.vector_sup));  // reported, not bounded
}

TEST_CASE("increasing the choice number thins every tail level") {
  const double rho = 0.8;
  std::vector<TailSequence> solved;
  for (int d = 1; d <= 4; ++d) solved.push_back(mg1_fixed_point(poisson_mg1(rho, 1.0, d), 8));
  for (size_t i = 0; i + 1 < solved.size(); ++i)
    for (int k = 2; k <= 8; ++k)
      CHECK(solved[i + 1].r_at(k) <= solved[i].r_at(k) + 1e-15);
}

TEST_CASE("lumped closure yields a proper finite generator") {
  const Mg1Model model = make_mg1_model(batch_bmap(), 2.0, 1);
  const ChoiceDecomposition dec = mg1_decomposition(model, 12, Closure::lumped);
  const BlockGenerator q = dec.sum();
  CHECK(validate_generator(q).ok());
  for (int i = 0; i < q.levels(); ++i) CHECK(q.row_sums(i).cwiseAbs().maxCoeff() < 1e-12);
}
