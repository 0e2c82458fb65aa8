#include <doctest.h>

#include <cmath>

#include "sensa/morris.hpp"
#include "sensa/sampling.hpp"
#include "sensa/testbed.hpp"

using namespace sensa;

namespace {

OutputMatrix evaluate(const DesignMatrix& d, auto&& f) {
  Matrix y(d.rows(), 1);
  for (Eigen::Index i = 0; i < d.unit.rows(); ++i) y(i, 0) = f(d.unit.row(i));
  return OutputMatrix::from_values(std::move(y), {"y"});
}

}  // namespace

TEST_CASE("linear function gives exact effects") {
  auto s = ParameterSpace::unit_cube(2);
  auto d = morris_oat(s, {30, 20, 0}, 5);
  auto out = evaluate(d, [](auto u) { return 2.0 * u(0) + 0.0 * u(1); });
  auto ee = elementary_effects(d, out, 0);
  CHECK(ee.trajectoriesUsed == 30);
  CHECK(ee.muStar[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ee.mu[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ee.muStar[1] == 0.0);
  CHECK(std::abs(ee.sigma[0]) < 1e-10);
  CHECK(ee.sigma[1] == 0.0);

  // Flipping the sign of the dependence flips mu but not mu*.
  auto neg = elementary_effects(d, evaluate(d, [](auto u) { return -2.0 * u(0); }), 0);
  CHECK(neg.mu[0] == doctest::Approx(-2.0));
  CHECK(neg.muStar[0] == doctest::Approx(2.0));
}

TEST_CASE("dgsm combines mu* and sigma") {
  ElementaryEffects ee;
  ee.mu = {0.0};
  ee.muStar = {3.0};
  ee.sigma = {4.0};
  ee.dgsm = {std::hypot(3.0, 4.0)};
  auto r = morris_result(ee, {"a"});
  CHECK(r.raw[0] == 5.0);
  CHECK(r.extra.at("mu_star")[0] == 3.0);
}

TEST_CASE("product term gives nonzero sigma; effects match hand enumeration") {
  auto s = ParameterSpace::unit_cube(2);
  auto d = morris_oat(s, {12, 4, 0}, 9);
  auto out = evaluate(d, [](auto u) { return u(0) * u(1); });
  auto ee = elementary_effects(d, out, 0);
  // For x1*x2 the effect of a step in x1 is the current x2, and vice versa.
  std::vector<double> expect1;
  for (std::size_t t = 0; t < 12; ++t) {
    for (std::size_t s_ = 0; s_ < 2; ++s_) {
      const auto a = static_cast<Eigen::Index>(t * 3 + s_);
      if (d.unit(a, 0) != d.unit(a + 1, 0)) expect1.push_back(d.unit(a, 1));
    }
  }
  REQUIRE(expect1.size() == ee.perParam[0].size());
  for (std::size_t i = 0; i < expect1.size(); ++i) {
    CHECK(ee.perParam[0][i] == doctest::Approx(expect1[i]).epsilon(1e-12));
  }
  CHECK(ee.sigma[0] > 0.0);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(ee.muStar[k] >= std::abs(ee.mu[k]));
    CHECK(ee.dgsm[k] >= ee.muStar[k]);
    CHECK(ee.dgsm[k] >= ee.sigma[k]);
  }
}

TEST_CASE("additive function has zero sigma") {
  auto f = AnalyticFn::linear({1.0, -3.0, 0.5});
  auto d = morris_oat(f.space(), {20, 8, 0}, 2);
  Matrix y(d.rows(), 1);
  y.col(0) = f.eval(d.unit);
  auto ee = elementary_effects(d, OutputMatrix::from_values(y, {"y"}), 0);
  for (double s : ee.sigma) CHECK(s < 1e-10);
  CHECK(ee.muStar[1] == doctest::Approx(3.0));
}

TEST_CASE("masked rows drop whole trajectories") {
  auto s = ParameterSpace::unit_cube(2);
  auto d = morris_oat(s, {5, 4, 0}, 1);
  auto out = evaluate(d, [](auto u) { return u(0); });
  out.valid[4] = 0;  // second trajectory, middle row
  auto ee = elementary_effects(d, out, 0);
  CHECK(ee.trajectoriesUsed == 4);
  CHECK(ee.trajectoriesDropped == 1);
  CHECK(ee.perParam[0].size() == 4);

  std::fill(out.valid.begin(), out.valid.end(), 0);
  CHECK_THROWS_AS(elementary_effects(d, out, 0), Error);

  auto lhs = lhs_maximin(s, {6, 1, 0});
  CHECK_THROWS_AS(elementary_effects(lhs, evaluate(lhs, [](auto u) { return u(0); }), 0), Error);
}

TEST_CASE("scatter table") {
  auto s = ParameterSpace::unit_cube(2);
  auto d = morris_oat(s, {5, 4, 0}, 1);
  auto ee = elementary_effects(d, evaluate(d, [](auto u) { return u(0) + u(0) * u(1); }), 0);
  auto rows = morris_scatter(ee, s.names());
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].param == "x2");
  CHECK(rows[0].muStar == ee.muStar[0]);
}
