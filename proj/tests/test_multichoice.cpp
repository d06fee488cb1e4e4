#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "supermarket/mean_field.hpp"
#include "supermarket/multichoice.hpp"
#include "supermarket/stationary.hpp"

using namespace supermarket;
using supermarket::testing::scalar_state;

TEST_CASE("roving server closed forms per regime") {
  SUBCASE("more input than output choices: doubly exponential decay") {
    const MobileServerModel model = make_mobile_model(0.5, 1.0, 2, 1);
    const MobileSolution sol = mobile_fixed_point(model, 8);
    CHECK(sol.regime == MobileRegime::doubly_exponential);
    CHECK(sol.limit == 0.0);
    CHECK(sol.pi[0] == 1.0);
    for (int k = 1; k <= 8; ++k) {
      const double expect = std::pow(0.5, std::pow(2.0, k) - 1.0);
      CHECK(std::abs(sol.pi[static_cast<size_t>(k)] - expect) <= 1e-12 * expect + 1e-300);
    }
  }
  SUBCASE("matched choices: geometric decay") {
    const MobileServerModel model = make_mobile_model(0.25, 1.0, 2, 2);
    const MobileSolution sol = mobile_fixed_point(model, 16);
    CHECK(sol.regime == MobileRegime::geometric);
    for (int k = 0; k <= 16; ++k)
      CHECK(std::abs(sol.pi[static_cast<size_t>(k)] - std::pow(0.5, k)) < 1e-14);
  }
  SUBCASE("more output choices: a positive fraction of lines escapes") {
    const MobileServerModel model = make_mobile_model(0.5, 1.0, 1, 2);
    const MobileSolution sol = mobile_fixed_point(model, 200);
    CHECK(sol.regime == MobileRegime::transient);
    CHECK(std::abs(sol.limit - 0.5) < 1e-15);
    CHECK(std::abs(sol.pi[200] - 0.5) < 1e-12);
    for (size_t k = 1; k < sol.pi.size(); ++k) {
      CHECK(sol.pi[k] > sol.limit - 1e-15);   // approaches the limit from above
      CHECK(sol.pi[k] <= sol.pi[k - 1] + 1e-15);
    }
  }
}

TEST_CASE("regime classification covers the full choice grid") {
  for (int d = 1; d <= 3; ++d)
    for (int f = 1; f <= 3; ++f) {
      const MobileServerModel model = make_mobile_model(0.6, 1.0, d, f);
      const MobileSolution sol = mobile_fixed_point(model, 4);
      if (d > f) {
        CHECK(sol.regime == MobileRegime::doubly_exponential);
        CHECK(sol.limit == 0.0);
      } else if (d == f) {
        CHECK(sol.regime == MobileRegime::geometric);
        CHECK(sol.limit == 0.0);
      } else {
        CHECK(sol.regime == MobileRegime::transient);
        CHECK(sol.limit > 0.0);
        CHECK(sol.limit < 1.0);
        CHECK(std::abs(sol.limit - std::pow(0.6, 1.0 / (f - d))) < 1e-15);
      }
    }
  CHECK(std::string(to_string(MobileRegime::doubly_exponential)) == "doubly_exponential");
  CHECK(std::string(to_string(MobileRegime::geometric)) == "geometric");
  CHECK(std::string(to_string(MobileRegime::transient)) == "transient");
}

TEST_CASE("closed-form exponent matches the one-step recursion") {
  for (const auto [d, f] : {std::pair{3, 2}, std::pair{2, 3}, std::pair{3, 1}}) {
    const MobileServerModel model = make_mobile_model(0.7, 1.0, d, f);
    const MobileSolution sol = mobile_fixed_point(model, 20);
    double pi = 1.0;
    for (int k = 1; k <= 20; ++k) {
      pi = std::pow(model.rho * std::pow(pi, d), 1.0 / f);
      CHECK(std::abs(sol.pi[static_cast<size_t>(k)] - pi) <= 1e-13 * (pi + 1e-30));
    }
  }
}

TEST_CASE("level balance holds across the load and choice grid") {
  for (const double rho : {0.2, 0.5, 0.9})
    for (int d = 1; d <= 3; ++d)
      for (int f = 1; f <= 3; ++f) {
        const MobileServerModel model = make_mobile_model(rho, 1.0, d, f);
        const MobileSolution sol = mobile_fixed_point(model, 64);
        for (const double r : mobile_residual(sol.pi, model)) CHECK(r < 1e-12);
      }
}

TEST_CASE("perturbed sequences are flagged by the balance residual") {
  const MobileServerModel model = make_mobile_model(0.5, 1.0, 2, 1);
  MobileSolution sol = mobile_fixed_point(model, 6);
  sol.pi[2] *= 1.01;
  const std::vector<double> res = mobile_residual(sol.pi, model);
  CHECK(res[1] > 1e-5);
}

TEST_CASE("roving-server split validates and vanishes at the closed form") {
  const MobileServerModel model = make_mobile_model(0.5, 1.0, 2, 1);
  for (const Closure closure : {Closure::open, Closure::lumped}) {
    const ChoiceDecomposition dec = mobile_decomposition(model, 32, closure);
    CHECK(validate_decomposition(dec).ok());
    CHECK(dec.right[0].choice == 2);
    CHECK(dec.left[0].choice == 1);
  }
  const ChoiceDecomposition open_dec = mobile_decomposition(model, 32, Closure::open);
  const MobileSolution sol = mobile_fixed_point(model, 32);
  const FractionMeasure fm = scalar_state(sol.pi);
  CHECK(fixed_point_residual(fm, open_dec).sup_norm < 1e-12);
}

TEST_CASE("linear single-choice case agrees with the truncated chain") {
  const MobileServerModel model = make_mobile_model(0.7, 1.0, 1, 1);
  const int K = 40;
  const MobileSolution sol = mobile_fixed_point(model, K);
  const ChoiceDecomposition dec = mobile_decomposition(model, K, Closure::lumped);
  const FractionMeasure chain = truncated_stationary_vector(dec.sum());
  REQUIRE(chain.num_levels() == K + 1);
  for (int k = 0; k <= K; ++k)
    CHECK(std::abs(chain.levels[static_cast<size_t>(k)](0) - sol.pi[static_cast<size_t>(k)]) <
          1e-12);
}

TEST_CASE("argument guards") {
  CHECK_THROWS_AS((void)make_mobile_model(0.0, 1.0, 2, 1), ShapeError);
  CHECK_THROWS_AS((void)make_mobile_model(1.0, 1.0, 0, 1), ShapeError);
  const MobileServerModel model = make_mobile_model(0.5, 1.0, 2, 1);
  CHECK_THROWS_AS((void)mobile_fixed_point(model, -1), ShapeError);
  CHECK_THROWS_AS((void)mobile_decomposition(model, 1), ShapeError);
  CHECK_THROWS_AS((void)mobile_residual(std::vector<double>{}, model), ShapeError);
}

TEST_CASE("single customer class reduces to the power tail") {
  MultiClassModel model = make_multiclass_model({ClassArrival{0.8, 2}}, 1.0);
  const std::vector<double> delta = multiclass_fixed_point(model, 6);
  for (int k = 0; k <= 6; ++k) {
    const double expect = std::pow(0.8, std::pow(2.0, k) - 1.0);
    CHECK(std::abs(delta[static_cast<size_t>(k)] - expect) <= 1e-12 * expect);
  }
}

TEST_CASE("two customer classes with mixed choice numbers") {
  const MultiClassModel model =
      make_multiclass_model({ClassArrival{0.2, 1}, ClassArrival{0.2, 2}}, 1.0);
  CHECK(std::abs(model.rho - 0.4) < 1e-15);
  const std::vector<double> delta = multiclass_fixed_point(model, 3);
  CHECK(delta[0] == 1.0);
  CHECK(std::abs(delta[1] - 0.4) < 1e-15);
  CHECK(std::abs(delta[2] - 0.112) < 1e-15);
  CHECK(std::abs(delta[3] - (0.112 * 0.2 + 0.112 * 0.112 * 0.2)) < 1e-15);
  for (const double r : multiclass_residual(delta, model)) CHECK(r < 1e-15);
}

TEST_CASE("unit choices in every class give a geometric tail") {
  const MultiClassModel model =
      make_multiclass_model({ClassArrival{0.3, 1}, ClassArrival{0.2, 1}}, 1.0);
  const std::vector<double> delta = multiclass_fixed_point(model, 30);
  for (int k = 0; k <= 30; ++k)
    CHECK(std::abs(delta[static_cast<size_t>(k)] - std::pow(0.5, k)) < 1e-14);
}

TEST_CASE("classes with equal choice numbers merge") {
  const MultiClassModel split =
      make_multiclass_model({ClassArrival{0.25, 3}, ClassArrival{0.35, 3}}, 1.0);
  const MultiClassModel merged = make_multiclass_model({ClassArrival{0.6, 3}}, 1.0);
  const std::vector<double> a = multiclass_fixed_point(split, 10);
  const std::vector<double> b = multiclass_fixed_point(merged, 10);
  for (size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-14);
}

TEST_CASE("class tail is monotone and the auto cap stops below tolerance") {
  const MultiClassModel model =
      make_multiclass_model({ClassArrival{0.2, 1}, ClassArrival{0.2, 2}}, 1.0);
  const std::vector<double> delta = multiclass_fixed_point_auto(model, 1e-14);
  CHECK(delta.back() < 1e-14);
  for (size_t k = 1; k < delta.size(); ++k) CHECK(delta[k] <= delta[k - 1] + 1e-15);
  const std::vector<double> fixed = multiclass_fixed_point(model, static_cast<int>(delta.size()) - 1);
  for (size_t k = 0; k < delta.size(); ++k) CHECK(delta[k] == fixed[k]);
}

TEST_CASE("total load at or above one is rejected") {
  CHECK_THROWS_AS((void)make_multiclass_model({ClassArrival{0.6, 1}, ClassArrival{0.4, 2}}, 1.0),
                  StabilityError);
}

TEST_CASE("class split validates and vanishes at the recursion tail") {
  const MultiClassModel model =
      make_multiclass_model({ClassArrival{0.2, 1}, ClassArrival{0.2, 2}}, 1.0);
  const int K = 24;
  for (const Closure closure : {Closure::open, Closure::lumped}) {
    const ChoiceDecomposition dec = multiclass_decomposition(model, K, closure);
    CHECK(validate_decomposition(dec).ok());
    REQUIRE(dec.right.size() == 2);
    CHECK(dec.right[0].choice == 1);
    CHECK(dec.right[1].choice == 2);
    CHECK(dec.left.size() == 1);
  }
  const ChoiceDecomposition open_dec = multiclass_decomposition(model, K, Closure::open);
  const FractionMeasure fm = scalar_state(multiclass_fixed_point(model, K));
  CHECK(fixed_point_residual(fm, open_dec).sup_norm < 1e-12);
}
