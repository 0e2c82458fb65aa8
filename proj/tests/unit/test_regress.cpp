#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "sensa/regress.hpp"
#include "sensa/sampling.hpp"

using namespace sensa;

namespace {

OutputMatrix evaluate(const DesignMatrix& d, auto&& f) {
  Matrix y(d.rows(), 1);
  for (Eigen::Index i = 0; i < d.unit.rows(); ++i) y(i, 0) = f(d.mapped.row(i));
  return OutputMatrix::from_values(std::move(y), {"y"});
}

DesignMatrix lhs(std::size_t n, std::size_t k, std::uint64_t seed) {
  return lhs_maximin(ParameterSpace::unit_cube(k), {.n = n, .seed = seed, .maximinSweeps = 2});
}

std::vector<std::string> names(const DesignMatrix& d) {
  return ParameterSpace::unit_cube(d.dims()).names();
}

}  // namespace

TEST_CASE("OLS on an exactly determined line") {
  Matrix x(3, 1);
  x << 0, 1, 2;
  Vector y(3);
  y << 1, 3, 5;
  auto fit = ols_fit(x, y);
  CHECK(fit.beta(0) == doctest::Approx(1.0));
  CHECK(fit.beta(1) == doctest::Approx(2.0));
  CHECK(fit.residuals.norm() < 1e-12);
  CHECK(fit.r2 == doctest::Approx(1.0));
  CHECK(fit.tAbs[0] > 1e6);

  Matrix two(2, 1);
  two << 0, 1;
  CHECK_THROWS_AS(ols_fit(two, y.head(2)), Error);
  Matrix dup(4, 2);
  dup << 0, 0, 1, 1, 2, 2, 3, 3;
  Vector y4(4);
  y4 << 1, 2, 3, 5;
  CHECK_THROWS_AS(ols_fit(dup, y4), Error);
}

TEST_CASE("OLS residuals are orthogonal to the regressors") {
  auto d = lhs(200, 3, 5);
  auto out = evaluate(d, [](auto x) { return 2 * x(0) - x(1) + std::sin(6 * x(2)); });
  OlsOptions o;
  o.quadratic = true;
  auto fit = ols_src(d, out, 0, o);
  CHECK(std::abs(fit.residuals.sum()) < 1e-9);
  for (Eigen::Index c = 0; c < 3; ++c) {
    CHECK(std::abs(fit.residuals.dot(d.mapped.col(c))) < 1e-9);
  }
  CHECK(fit.beta(1) == doctest::Approx(2.0).epsilon(0.05));
  REQUIRE(fit.quadraticR2.has_value());
  CHECK(*fit.quadraticR2 >= fit.r2);
  auto r = ols_result(fit, names(d));
  CHECK(r.scaled[0] > r.scaled[1]);
  CHECK(r.scalars.at("r2") == fit.r2);
}

TEST_CASE("OLS flags a poor linear fit") {
  auto d = lhs(300, 2, 1);
  auto out = evaluate(d, [](auto x) { return std::cos(12 * x(0)) + 0.01 * x(1); });
  auto fit = ols_src(d, out, 0);
  CHECK(fit.lowFit);
  CHECK_FALSE(ols_result(fit, names(d)).warnings.empty());
}

TEST_CASE("tree on a step function") {
  auto d = lhs(200, 3, 2);
  auto out = evaluate(d, [](auto x) { return x(0) < 0.5 ? 0.0 : 1.0; });
  auto tree = fit_regression_tree(d, out, 0);
  CHECK(tree.leaf_count() == 2);
  CHECK(tree.nodes[0].param == 0);
  CHECK(tree.nodes[0].threshold == doctest::Approx(0.5).epsilon(0.02));
  auto r = tree_result(tree, names(d));
  CHECK(r.scaled[0] == 1.0);
  CHECK(r.scaled[1] == 0.0);
  CHECK(tree.leafTable.size() == 200);
  for (const auto& a : tree.leafTable) {
    const bool upper = d.mapped(static_cast<Eigen::Index>(a.row), 0) >= 0.5;
    CHECK(a.fitted == (upper ? 1.0 : 0.0));
  }

  auto flat = evaluate(d, [](auto) { return 3.0; });
  auto one = fit_regression_tree(d, flat, 0);
  CHECK(one.leaf_count() == 1);
  CHECK(one.nodes[0].value == 3.0);

  auto small = lhs(30, 2, 1);
  CHECK_THROWS_AS(fit_regression_tree(small, evaluate(small, [](auto x) { return x(0); }), 0),
                  Error);
}

TEST_CASE("tree splits share importance between additive inputs") {
  auto d = lhs(1000, 2, 3);
  auto out = evaluate(d, [](auto x) { return x(0) + x(1); });
  auto r = tree_result(fit_regression_tree(d, out, 0), names(d));
  CHECK(r.scaled[0] > 0.35);
  CHECK(r.scaled[0] < 0.65);
  // Every split gain is recorded once, on its parameter.
  auto tree = fit_regression_tree(d, out, 0);
  double gains = 0.0;
  for (const auto& n : tree.nodes) gains += n.improvement;
  CHECK(gains == doctest::Approx(tree.importance[0] + tree.importance[1]));
}

TEST_CASE("forest ranks inputs and ignores an inert one") {
  auto d = lhs(600, 3, 4);
  auto out = evaluate(d, [](auto x) { return 3 * x(0) + x(1); });
  ForestOptions o;
  o.trees = 100;
  o.seed = 9;
  auto fit = fit_random_forest(d, out, 0, o);
  CHECK(fit.trees.size() == 100);
  CHECK(fit.oobPermImportance[0] > fit.oobPermImportance[1]);
  CHECK(fit.oobPermImportance[1] > fit.oobPermImportance[2]);
  CHECK(fit.oobPermImportance[2] < 0.02 * fit.oobPermImportance[0]);
  CHECK(fit.impurityImportance[0] > fit.impurityImportance[1]);
  CHECK(fit.oobR2 > 0.9);
  for (std::size_t c = 0; c < 3; ++c) CHECK(fit.oobPermImportance[c] >= 0.0);

  o.jobs = 3;
  auto again = fit_random_forest(d, out, 0, o);
  CHECK(again.oobPermRaw == fit.oobPermRaw);
  CHECK(again.impurityImportance == fit.impurityImportance);

  auto [perm, imp] = forest_results(fit, names(d));
  CHECK(perm.method == Method::ForestPermutation);
  CHECK(imp.method == Method::ForestImpurity);
  CHECK(perm.scalars.at("oob_r2") == fit.oobR2);
}

TEST_CASE("GPR recovers a linear trend") {
  auto d = lhs(120, 3, 6);
  auto out = evaluate(d, [](auto x) { return 1.0 + 2.0 * x(0) - 0.5 * x(1); });
  GprOptions o;
  o.restarts = 2;
  auto fit = fit_gpr(d, out, 0, o);
  CHECK(fit.converged);
  CHECK(fit.trendBeta(0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(fit.trendBeta(1) - 2.0) < 1e-3);
  CHECK(std::abs(fit.trendBeta(2) + 0.5) < 1e-3);
  CHECK(std::abs(fit.trendBeta(3)) < 1e-3);
  CHECK(std::accumulate(fit.invRangeNorm.begin(), fit.invRangeNorm.end(), 0.0) ==
        doctest::Approx(1.0));
  auto r = gpr_slope_result(fit, names(d));
  CHECK(r.scaled[0] > r.scaled[1]);
}

TEST_CASE("GPR likelihood beats random range points") {
  auto d = lhs(80, 2, 8);
  auto out = evaluate(d, [](auto x) { return std::sin(5 * x(0)) + 0.3 * x(1) * x(1); });
  GprOptions o;
  o.restarts = 3;
  o.seed = 2;
  auto fit = fit_gpr(d, out, 0, o);
  const auto data = collect(d, out, 0, true);
  CHECK(gpr_profile_loglik(data.x, data.y, fit.ranges, o.alpha) ==
        doctest::Approx(fit.logLik).epsilon(1e-9));
  Rng rng(77);
  for (int t = 0; t < 32; ++t) {
    const double ranges[] = {std::exp(std::log(1e-2) + rng.uniform() * std::log(1e4)),
                             std::exp(std::log(1e-2) + rng.uniform() * std::log(1e4))};
    CHECK(gpr_profile_loglik(data.x, data.y, ranges, o.alpha) <= fit.logLik + 1e-6);
  }
  // The sinusoidal input varies faster, so its range is shorter.
  CHECK(fit.ranges[0] < fit.ranges[1]);
  CHECK(fit.invRangeNorm[0] > 0.5);
}

TEST_CASE("GPR subsampling and errors") {
  auto d = lhs(60, 2, 3);
  auto out = evaluate(d, [](auto x) { return x(0) + x(1) * x(1); });
  out.valid[4] = 0;
  GprOptions o;
  o.maxN = 25;
  o.restarts = 1;
  o.seed = 4;
  auto fit = fit_gpr(d, out, 0, o);
  CHECK(fit.subsampleIdx.size() == 25);
  CHECK(std::is_sorted(fit.subsampleIdx.begin(), fit.subsampleIdx.end()));
  for (auto i : fit.subsampleIdx) CHECK(i != 4);
  auto flat = evaluate(d, [](auto) { return 1.0; });
  CHECK_THROWS_AS(fit_gpr(d, flat, 0, o), Error);
  o.alpha = 2.5;
  CHECK_THROWS_AS(fit_gpr(d, out, 0, o), Error);
}

TEST_CASE("tree leaves hold their members' mean and SSE shrinks down splits") {
  auto d = lhs(400, 3, 11);
  auto out = evaluate(d, [](auto x) { return std::sin(3 * x(0)) * x(1) + x(2) * x(2); });
  TreeOptions o;
  o.minNodeSize = 10;
  auto tree = fit_regression_tree(d, out, 0, o);
  std::map<int, std::pair<double, std::size_t>> members;
  for (const auto& a : tree.leafTable) {
    auto& m = members[a.leaf];
    m.first += out.values(static_cast<Eigen::Index>(a.row), 0);
    ++m.second;
  }
  std::size_t total = 0;
  for (const auto& [leaf, m] : members) {
    const auto& node = tree.nodes[static_cast<std::size_t>(leaf)];
    CHECK(node.param < 0);
    CHECK(node.n == m.second);
    CHECK(node.value == doctest::Approx(m.first / static_cast<double>(m.second)).epsilon(1e-14));
    total += m.second;
  }
  CHECK(total == 400);
  CHECK(members.size() == tree.leaf_count());
  for (const auto& n : tree.nodes) {
    if (n.param < 0) continue;
    const auto& l = tree.nodes[static_cast<std::size_t>(n.left)];
    const auto& r = tree.nodes[static_cast<std::size_t>(n.right)];
    CHECK(l.sse + r.sse <= n.sse + 1e-12);
    CHECK(n.sse - l.sse - r.sse == doctest::Approx(n.improvement).epsilon(1e-9));
  }
}

TEST_CASE("forest beats a single tree on held-out data") {
  auto f = [](auto x) { return std::sin(3 * x(0)) + x(1) * x(1) + 0.5 * x(0) * x(2); };
  auto test = lhs(500, 3, 999);
  Vector truth(500);
  for (Eigen::Index i = 0; i < 500; ++i) truth(i) = f(test.mapped.row(i));
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = lhs(200, 3, 50 + seed);
    auto out = evaluate(d, f);
    const auto data = collect(d, out, 0);
    ForestOptions many;
    many.trees = 500;
    many.seed = seed;
    ForestOptions one = many;
    one.trees = 1;
    const double mse_many = (fit_forest(data.x, data.y, many).predict(test.mapped) - truth).squaredNorm();
    const double mse_one = (fit_forest(data.x, data.y, one).predict(test.mapped) - truth).squaredNorm();
    if (mse_many <= mse_one) ++wins;
  }
  CHECK(wins >= 9);
}
